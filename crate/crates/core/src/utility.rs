//! Cobb-Douglas utility over (debt, savings, expenses), its constrained
//! optimum, first-order checks and the deviation penalty.
//!
//! With exponents `(α, β, γ)` summing to one, `U = D^α S^β E^γ` is
//! homogeneous of degree one and the budget-constrained maximizer is
//! `(αI, βI, γI)`.

use crate::domain::{make_allocation, Allocation, Fractions, Money};
use crate::error::{Error, Result};

const EXPONENT_SUM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UtilityParams {
    alpha: f64,
    beta_s: f64,
    gamma: f64,
}

impl UtilityParams {
    /// Exponents for debt, savings and expenses; all positive, summing to 1.
    pub fn new(alpha: f64, beta_s: f64, gamma: f64) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta_s", beta_s), ("gamma", gamma)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(name, format!("exponent {v} must be positive and finite")));
            }
        }
        let sum = alpha + beta_s + gamma;
        if (sum - 1.0).abs() > EXPONENT_SUM_TOL {
            return Err(Error::validation("exponents", format!("sum to {sum}, not 1")));
        }
        Ok(UtilityParams { alpha, beta_s, gamma })
    }

    pub fn symmetric() -> Self {
        UtilityParams { alpha: 1.0 / 3.0, beta_s: 1.0 / 3.0, gamma: 1.0 / 3.0 }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta_s(&self) -> f64 {
        self.beta_s
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn exponents(&self) -> [f64; 3] {
        [self.alpha, self.beta_s, self.gamma]
    }

    pub fn is_symmetric(&self) -> bool {
        let third = 1.0 / 3.0;
        self.exponents().iter().all(|e| (e - third).abs() <= EXPONENT_SUM_TOL)
    }
}

impl Default for UtilityParams {
    fn default() -> Self {
        Self::symmetric()
    }
}

/// `D^α S^β E^γ` on raw components. Zero when any component is zero.
pub fn utility_at(params: &UtilityParams, point: [f64; 3]) -> f64 {
    if point.iter().any(|&x| x <= 0.0) {
        return 0.0;
    }
    point
        .iter()
        .zip(params.exponents())
        .map(|(x, e)| e * x.ln())
        .sum::<f64>()
        .exp()
}

pub fn utility(params: &UtilityParams, a: &Allocation) -> f64 {
    utility_at(params, a.as_f64())
}

/// Partial derivatives `(αU/D, βU/S, γU/E)` at an interior point.
pub fn gradient_at(params: &UtilityParams, point: [f64; 3]) -> Result<[f64; 3]> {
    if point.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::domain("utility_gradient", "every component must be positive"));
    }
    let u = utility_at(params, point);
    let e = params.exponents();
    Ok([e[0] * u / point[0], e[1] * u / point[1], e[2] * u / point[2]])
}

pub fn utility_gradient(params: &UtilityParams, a: &Allocation) -> Result<[f64; 3]> {
    gradient_at(params, a.as_f64())
}

/// Full Hessian of `U` at an interior point.
pub fn hessian_at(params: &UtilityParams, point: [f64; 3]) -> Result<[[f64; 3]; 3]> {
    if point.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::domain("hessian", "every component must be positive"));
    }
    let u = utility_at(params, point);
    let e = params.exponents();
    let mut h = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            h[i][j] = if i == j {
                e[i] * (e[i] - 1.0) * u / (point[i] * point[i])
            } else {
                e[i] * e[j] * u / (point[i] * point[j])
            };
        }
    }
    Ok(h)
}

/// The budget-constrained maximizer `(αI, βI, γI)`; symmetric exponents use
/// exact thirds so the result matches the one-third rule to the cent.
pub fn optimal_allocation(params: &UtilityParams, income: Money) -> Result<Allocation> {
    if income.is_negative() {
        return Err(Error::validation("income", format!("{income} is negative")));
    }
    if params.is_symmetric() {
        return make_allocation(income, &Fractions::thirds());
    }
    let debt = Money::from_f64(params.alpha * income.to_f64());
    let savings = Money::from_f64(params.beta_s * income.to_f64());
    let expenses = income - debt - savings;
    if expenses.is_negative() {
        // Only reachable through rounding with a vanishing expense exponent.
        return Allocation::with_income(debt, savings + expenses, Money::ZERO, income);
    }
    Allocation::with_income(debt, savings, expenses, income)
}

/// True when the three marginal utilities agree pairwise within relative
/// `tol` and the allocation carries an exact budget identity.
pub fn verify_first_order(params: &UtilityParams, a: &Allocation, tol: f64) -> Result<bool> {
    if a.components().iter().any(|c| c.cents() <= 0) {
        return Err(Error::domain("verify_first_order", "allocation lies on the simplex boundary"));
    }
    let g = utility_gradient(params, a)?;
    let close = |x: f64, y: f64| (x - y).abs() <= tol * x.abs().max(y.abs());
    let balanced = a.components().iter().copied().sum::<Money>() == a.income();
    Ok(balanced && close(g[0], g[1]) && close(g[1], g[2]) && close(g[0], g[2]))
}

/// `U(I/3, I/3, I/3) − U(I/3 + d, I/3 − d, I/3)`, in currency units.
pub fn deviation_utility_loss(params: &UtilityParams, income: f64, d: f64) -> Result<f64> {
    let third = income / 3.0;
    if !(income.is_finite() && d.is_finite()) || d.abs() >= third {
        return Err(Error::domain(
            "deviation_utility_loss",
            format!("|d| = {} must be below I/3 = {third}", d.abs()),
        ));
    }
    let base = utility_at(params, [third; 3]);
    let moved = utility_at(params, [third + d, third - d, third]);
    Ok(base - moved)
}

/// `k · d²`.
pub fn penalty_quadratic(k: f64, d: f64) -> Result<f64> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::validation("k", format!("{k} must be positive")));
    }
    Ok(k * d * d)
}

/// The closed-form penalty coefficient `2U*/(9(I/3)²)` for symmetric exponents.
///
/// This is the published coefficient. The exact second-order coefficient of
/// [`deviation_utility_loss`] is [`deviation_curvature`], which is 3/2 times
/// larger for symmetric exponents.
pub fn penalty_coefficient(params: &UtilityParams, income: f64) -> Result<f64> {
    if !params.is_symmetric() {
        return Err(Error::Unsupported("penalty coefficient is only defined for symmetric exponents".into()));
    }
    if !(income > 0.0 && income.is_finite()) {
        return Err(Error::domain("penalty_coefficient", "income must be positive"));
    }
    let third = income / 3.0;
    let u = utility_at(params, [third; 3]);
    Ok(2.0 * u / (9.0 * third * third))
}

/// `−½ (U_DD + U_SS − 2 U_DS)` at `(I/3, I/3, I/3)`: the exact limit of
/// `ΔU(d) / d²` as `d → 0` along the debt-for-savings direction.
pub fn deviation_curvature(params: &UtilityParams, income: f64) -> Result<f64> {
    if !(income > 0.0 && income.is_finite()) {
        return Err(Error::domain("deviation_curvature", "income must be positive"));
    }
    let h = hessian_at(params, [income / 3.0; 3])?;
    Ok(-0.5 * (h[0][0] + h[1][1] - 2.0 * h[0][1]))
}
