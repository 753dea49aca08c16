//! Seeded income and savings processes.
//!
//! # Stream derivation
//!
//! Every trial owns a SplitMix64 generator. With
//!
//! ```text
//! mix(z) = { z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
//!            z = (z ^ (z >> 27)) * 0x94D049BB133111EB;
//!            z ^ (z >> 31) }                      // wrapping u64 arithmetic
//! ```
//!
//! the initial state of trial `i` under master seed `s` is
//! `mix(s ^ mix(i + 0x9E3779B97F4A7C15))`. Each draw adds
//! `0x9E3779B97F4A7C15` to the state and returns `mix(state)`.
//! Uniforms are `(u >> 11) · 2⁻⁵³`; normals come from Box–Muller on
//! `(1 − u₁, u₂)`, returning the cosine branch first and the sine branch
//! on the next call.
//!
//! Trials depend only on `(master_seed, trial_index)`, so results do not
//! depend on scheduling.

use std::f64::consts::TAU;

use rayon::prelude::*;

use crate::domain::Money;
use crate::error::{Error, Result};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-trial SplitMix64 stream with a cached Box–Muller normal.
#[derive(Clone, Debug)]
pub struct TrialRng {
    state: u64,
    spare_normal: Option<f64>,
}

impl TrialRng {
    pub fn from_state(state: u64) -> Self {
        TrialRng { state, spare_normal: None }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = TAU * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }
}

pub fn derive_trial_rng(master_seed: u64, trial_index: u64) -> TrialRng {
    TrialRng::from_state(mix64(master_seed ^ mix64(trial_index.wrapping_add(GOLDEN_GAMMA))))
}

/// `(z₁, ρz₁ + √(1−ρ²)z₂)` from two independent standard normals.
pub fn correlated_normal_pair(rho: f64, rng: &mut TrialRng) -> Result<(f64, f64)> {
    if !(rho.abs() <= 1.0) {
        return Err(Error::validation("rho", format!("{rho} is outside [-1, 1]")));
    }
    let z1 = rng.next_normal();
    let z2 = rng.next_normal();
    Ok((z1, rho * z1 + (1.0 - rho * rho).sqrt() * z2))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathConfig {
    pub horizon_years: f64,
    pub dt_years: f64,
    pub trials: u64,
    pub master_seed: u64,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig { horizon_years: 5.0, dt_years: 1.0 / 12.0, trials: 1000, master_seed: 0 }
    }
}

impl PathConfig {
    /// Number of steps; the horizon must be a whole number of `dt` steps.
    pub fn steps(&self) -> Result<usize> {
        if !(self.horizon_years.is_finite() && self.horizon_years > 0.0) {
            return Err(Error::validation("horizon_years", "must be positive"));
        }
        if !(self.dt_years.is_finite() && self.dt_years > 0.0) {
            return Err(Error::validation("dt_years", "must be positive"));
        }
        if self.trials == 0 {
            return Err(Error::validation("trials", "must be at least 1"));
        }
        let ratio = self.horizon_years / self.dt_years;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::validation(
                "dt_years",
                format!("horizon {} is not a whole number of {}-year steps", self.horizon_years, self.dt_years),
            ));
        }
        Ok(steps as usize)
    }

    /// Step times `k · horizon / steps` for `k = 0..=steps`.
    pub fn times(&self) -> Result<Vec<f64>> {
        let n = self.steps()?;
        Ok((0..=n).map(|k| k as f64 * self.horizon_years / n as f64).collect())
    }
}

/// A simulated path sampled at `times`, starting at `t = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    pub times: Vec<f64>,
    pub values: Vec<Money>,
    /// Steps where the raw process went below zero and was floored.
    pub floored_steps: usize,
}

pub type IncomePath = Path;
pub type SavingsPath = Path;

impl Path {
    pub fn last(&self) -> Money {
        *self.values.last().expect("paths hold at least the initial value")
    }
}

/// `I(t) = I₀(1 + μt + σ_I W(t))` where `W` accumulates `√dt · zₖ` and
/// `shocks` supplies the `zₖ`. Values are floored at zero.
pub fn income_path_from_shocks(i0: Money, mu: f64, sigma_i: f64, cfg: &PathConfig, shocks: &[f64]) -> Result<IncomePath> {
    if i0.is_negative() {
        return Err(Error::validation("i0", "initial income must be nonnegative"));
    }
    let times = cfg.times()?;
    let steps = times.len() - 1;
    if shocks.len() < steps {
        return Err(Error::validation("shocks", format!("need {steps} shocks, got {}", shocks.len())));
    }
    let sqrt_dt = (cfg.horizon_years / steps as f64).sqrt();
    let base = i0.to_f64();
    let mut w = 0.0;
    let mut floored_steps = 0;
    let mut values = Vec::with_capacity(times.len());
    values.push(i0);
    for (t, z) in times[1..].iter().zip(shocks) {
        w += sqrt_dt * z;
        let raw = base * (1.0 + mu * t + sigma_i * w);
        if raw < 0.0 {
            floored_steps += 1;
        }
        values.push(Money::from_f64(raw.max(0.0)));
    }
    Ok(Path { times, values, floored_steps })
}

pub fn simulate_income_path(i0: Money, mu: f64, sigma_i: f64, cfg: &PathConfig, rng: &mut TrialRng) -> Result<IncomePath> {
    let steps = cfg.steps()?;
    let shocks: Vec<f64> = (0..steps).map(|_| rng.next_normal()).collect();
    income_path_from_shocks(i0, mu, sigma_i, cfg, &shocks)
}

/// One Euler–Maruyama savings step with an end-of-step contribution.
pub fn savings_step(balance: f64, contribution: f64, r: f64, sigma_m: f64, dt: f64, z: f64) -> f64 {
    balance * (1.0 + r * dt + sigma_m * dt.sqrt() * z) + contribution
}

/// Savings under `dS/S = r dt + σ_M dZ` with a fixed contribution after each
/// growth step. `shocks`, when given, replaces the generator's draws so the
/// market shock can be correlated with income. The balance is floored at zero.
pub fn simulate_savings_path(
    s0: Money,
    per_step_contribution: Money,
    r: f64,
    sigma_m: f64,
    cfg: &PathConfig,
    rng: &mut TrialRng,
    shocks: Option<&[f64]>,
) -> Result<SavingsPath> {
    if s0.is_negative() {
        return Err(Error::validation("s0", "initial savings must be nonnegative"));
    }
    if per_step_contribution.is_negative() {
        return Err(Error::validation("per_step_contribution", "must be nonnegative"));
    }
    let times = cfg.times()?;
    let steps = times.len() - 1;
    if let Some(z) = shocks {
        if z.len() < steps {
            return Err(Error::validation("shocks", format!("need {steps} shocks, got {}", z.len())));
        }
    }
    let dt = cfg.horizon_years / steps as f64;
    let c = per_step_contribution.to_f64();
    let mut balance = s0.to_f64();
    let mut floored_steps = 0;
    let mut values = Vec::with_capacity(times.len());
    values.push(s0);
    for k in 0..steps {
        let z = match shocks {
            Some(z) => z[k],
            None => rng.next_normal(),
        };
        balance = savings_step(balance, c, r, sigma_m, dt, z);
        if balance < 0.0 {
            floored_steps += 1;
            balance = 0.0;
        }
        values.push(Money::from_f64(balance));
    }
    Ok(Path { times, values, floored_steps })
}

/// Resolves a worker count: `0` means all available cores.
pub fn resolve_threads(threads: usize) -> usize {
    if threads == 0 {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    } else {
        threads
    }
}

/// Runs `f` once per trial on its derived stream and returns results in
/// trial order, independent of `threads`.
pub fn map_trials<T, F>(master_seed: u64, trials: u64, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut TrialRng) -> T + Sync + Send,
{
    let run = || {
        (0..trials)
            .into_par_iter()
            .map(|i| {
                let mut rng = derive_trial_rng(master_seed, i);
                f(i, &mut rng)
            })
            .collect()
    };
    match rayon::ThreadPoolBuilder::new().num_threads(resolve_threads(threads)).build() {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    }
}
