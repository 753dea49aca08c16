//! Volatility adjustment factors around the one-third split.
//!
//! ```text
//! α_D = β₃σ_I² / (2β₁)
//! α_S = (β₃σ_I² + β₄σ_M²) / (2|β₂|)
//! α_E = β₃σ_I² / (2β₁)
//! ```
//!
//! `|β₂|` is used because the default risk calibration makes `β₂` negative
//! while the savings share is meant to grow with volatility. The three raw
//! shares `(⅓ − α_D, ⅓ + α_S, ⅓ − α_E)` only sum to one when
//! [`zero_sum_defect`] is zero, so [`adjusted_allocation`] projects them back
//! onto the budget through an explicit [`ProjectionMode`].

use serde::{Deserialize, Serialize};

use crate::domain::{Allocation, Money};
use crate::error::{Error, Result};
use crate::risk::RiskParams;

/// Largest magnitude any factor may take.
pub const FACTOR_CLAMP: f64 = 0.33;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentFactors {
    pub alpha_d: f64,
    pub alpha_s: f64,
    pub alpha_e: f64,
    /// Set when any raw factor exceeded [`FACTOR_CLAMP`].
    #[serde(default)]
    pub clamped: bool,
}

impl AdjustmentFactors {
    pub fn zero() -> Self {
        AdjustmentFactors { alpha_d: 0.0, alpha_s: 0.0, alpha_e: 0.0, clamped: false }
    }

    pub fn new(alpha_d: f64, alpha_s: f64, alpha_e: f64) -> Self {
        AdjustmentFactors { alpha_d, alpha_s, alpha_e, clamped: false }
    }

    /// Raw (debt, savings, expenses) shares before projection.
    pub fn raw_shares(&self) -> [f64; 3] {
        let third = 1.0 / 3.0;
        [third - self.alpha_d, third + self.alpha_s, third - self.alpha_e]
    }
}

fn clamp_factor(x: f64, clamped: &mut bool) -> f64 {
    if x.abs() > FACTOR_CLAMP {
        *clamped = true;
        FACTOR_CLAMP.copysign(x)
    } else {
        x
    }
}

pub fn adjustment_factors(rp: &RiskParams, sigma_i: f64, sigma_m: f64) -> Result<AdjustmentFactors> {
    if rp.beta1 == 0.0 {
        return Err(Error::validation("beta1", "must be nonzero"));
    }
    if rp.beta2 == 0.0 {
        return Err(Error::validation("beta2", "must be nonzero"));
    }
    for (name, v) in [("sigma_income", sigma_i), ("sigma_market", sigma_m)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::validation(name, format!("{v} must be nonnegative")));
        }
    }
    let income_term = rp.beta3 * sigma_i * sigma_i;
    let market_term = rp.beta4 * sigma_m * sigma_m;
    let alpha_d = income_term / (2.0 * rp.beta1);
    let alpha_s = (income_term + market_term) / (2.0 * rp.beta2.abs());

    let mut clamped = false;
    let alpha_d = clamp_factor(alpha_d, &mut clamped);
    let alpha_s = clamp_factor(alpha_s, &mut clamped);
    Ok(AdjustmentFactors { alpha_d, alpha_s, alpha_e: alpha_d, clamped })
}

/// `−α_D + α_S − α_E`: how far the raw shares overshoot a full budget.
pub fn zero_sum_defect(f: &AdjustmentFactors) -> f64 {
    -f.alpha_d + f.alpha_s - f.alpha_e
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    /// Debt and savings take their raw shares; expenses take what is left.
    #[default]
    ResidualExpenses,
    /// All three raw shares are divided by their sum.
    ProportionalRescale,
}

impl std::str::FromStr for ProjectionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "residual_expenses" => Ok(ProjectionMode::ResidualExpenses),
            "proportional_rescale" => Ok(ProjectionMode::ProportionalRescale),
            other => Err(Error::validation("mode", format!("unknown projection mode `{other}`"))),
        }
    }
}

/// Budget shares after projection. Sums to one up to float rounding.
pub fn adjusted_shares(f: &AdjustmentFactors, mode: ProjectionMode) -> Result<[f64; 3]> {
    let raw = f.raw_shares();
    for (name, v) in ["debt", "savings", "expenses"].iter().zip(raw) {
        if !(v >= 0.0) {
            return Err(Error::domain("adjusted_allocation", format!("raw {name} share {v} is negative")));
        }
    }
    let defect = zero_sum_defect(f);
    Ok(match mode {
        ProjectionMode::ResidualExpenses => [raw[0], raw[1], 1.0 - raw[0] - raw[1]],
        ProjectionMode::ProportionalRescale if defect == 0.0 => raw,
        ProjectionMode::ProportionalRescale => {
            let sum: f64 = raw.iter().sum();
            raw.map(|x| x / sum)
        }
    })
}

/// Uncertainty-adjusted split of `income`. Debt and savings round to the
/// cent; expenses take the residual, so the budget identity is exact.
pub fn adjusted_allocation(income: Money, f: &AdjustmentFactors, mode: ProjectionMode) -> Result<Allocation> {
    if income.is_negative() {
        return Err(Error::validation("income", format!("{income} is negative")));
    }
    let shares = adjusted_shares(f, mode)?;
    let cents = income.cents() as f64;
    let debt = Money::from_cents((shares[0] * cents).round() as i64);
    let savings = Money::from_cents((shares[1] * cents).round() as i64);
    let expenses = income - debt - savings;
    if expenses.is_negative() {
        return Err(Error::domain("adjusted_allocation", "residual expenses share is negative"));
    }
    Allocation::with_income(debt, savings, expenses, income)
}
