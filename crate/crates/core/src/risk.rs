//! Probit bankruptcy risk and the DTI/SER stability thresholds.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Probit sensitivities and threshold levels.
///
/// The default coefficients are not empirically calibrated. They are chosen
/// so risk rises with DTI and falls with SER, and the threshold point
/// `(DTI, SER) = (0.36, 1.0)` scores `Φ(−0.28)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskParams {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub beta4: f64,
    pub dti_limit: f64,
    pub ser_floor: f64,
}

impl Default for RiskParams {
    fn default() -> Self {
        RiskParams { beta1: 2.0, beta2: -1.0, beta3: 1.0, beta4: 0.5, dti_limit: 0.36, ser_floor: 1.0 }
    }
}

impl RiskParams {
    pub fn with_betas(beta1: f64, beta2: f64, beta3: f64, beta4: f64) -> Result<Self> {
        let rp = RiskParams { beta1, beta2, beta3, beta4, ..RiskParams::default() };
        rp.validate()?;
        Ok(rp)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("beta3", self.beta3),
            ("beta4", self.beta4),
            ("dti_limit", self.dti_limit),
            ("ser_floor", self.ser_floor),
        ] {
            if !v.is_finite() {
                return Err(Error::validation(name, format!("{v} is not finite")));
            }
        }
        if self.dti_limit <= 0.0 {
            return Err(Error::validation("dti_limit", "must be positive"));
        }
        if self.ser_floor <= 0.0 {
            return Err(Error::validation("ser_floor", "must be positive"));
        }
        Ok(())
    }

    /// True when DTI raises risk and SER lowers it.
    pub fn has_default_signs(&self) -> bool {
        self.beta1 > 0.0 && self.beta2 < 0.0
    }
}

/// Standard normal CDF, `½ erfc(−x/√2)`.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// `Φ(β₁·dti + β₂·ser + β₃·σ_I + β₄·σ_M)`.
pub fn bankruptcy_probability(rp: &RiskParams, dti: f64, ser: f64, sigma_i: f64, sigma_m: f64) -> f64 {
    std_normal_cdf(risk_score(rp, dti, ser, sigma_i, sigma_m))
}

/// The linear probit index before the CDF is applied.
pub fn risk_score(rp: &RiskParams, dti: f64, ser: f64, sigma_i: f64, sigma_m: f64) -> f64 {
    rp.beta1 * dti + rp.beta2 * ser + rp.beta3 * sigma_i + rp.beta4 * sigma_m
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StabilityFlags {
    pub dti_ok: bool,
    pub ser_ok: bool,
}

impl StabilityFlags {
    pub fn stable(&self) -> bool {
        self.dti_ok && self.ser_ok
    }
}

/// Inclusive threshold checks: `dti ≤ dti_limit`, `ser ≥ ser_floor`.
pub fn classify_stability(rp: &RiskParams, dti: f64, ser: f64) -> StabilityFlags {
    StabilityFlags { dti_ok: dti <= rp.dti_limit, ser_ok: ser >= rp.ser_floor }
}
