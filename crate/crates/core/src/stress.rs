//! Seeded Monte Carlo stress testing of allocation rules, plus the
//! closed-form debt-clearance and annuity arithmetic.
//!
//! # Monthly loop
//!
//! For month `m = 1..=H` of a trial:
//!
//! 1. Annual income is read from the income process at the start of the
//!    month; the monthly paycheck is a twelfth of it, scaled by
//!    `1 + income_shock` while the scenario is active.
//! 2. The paycheck is split by the rule into debt, savings and expense buckets.
//! 3. Expenses due are `baseline / 12` times the price level, which grows by
//!    `(1 + inflation)^(1/12)` in each active month. The expense bucket pays
//!    them; any shortfall is withdrawn from savings and any surplus is
//!    residual (discretionary) cash.
//! 4. Interest accrues at `apr × apr_multiplier / 12` and is paid before
//!    principal from the debt bucket. Interest the bucket cannot cover is
//!    withdrawn from savings; bucket money left after clearing the debt is
//!    residual cash.
//! 5. The opening savings balance grows by `1 + r/12 + σ_M·√(1/12)·z`
//!    (floored at zero), the savings bucket is deposited and the withdrawals
//!    are taken out. A negative result is a default and ends the trial.
//!
//! Income and market shocks are correlated through the profile's `ρ`. Every
//! flow is whole cents, so `income + withdrawals = expenses paid + debt
//! service + deposits + residual` holds exactly each month.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::domain::{make_allocation, AllocationRule, HouseholdProfile, Money, SignedMoney};
use crate::error::{Error, Result};
use crate::risk::RiskParams;
use crate::stochastic::{correlated_normal_pair, income_path_from_shocks, map_trials, PathConfig, TrialRng};

const MONTH: f64 = 1.0 / 12.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default)]
    pub income_shock: f64,
    #[serde(default = "one")]
    pub apr_multiplier: f64,
    #[serde(default)]
    pub inflation_annual: f64,
    #[serde(default = "first_month")]
    pub onset_month: u32,
    /// Zero means the shock never ends.
    #[serde(default)]
    pub duration_months: u32,
}

fn one() -> f64 {
    1.0
}

fn first_month() -> u32 {
    1
}

impl ScenarioSpec {
    /// No shock at all.
    pub fn baseline() -> Self {
        ScenarioSpec {
            name: "baseline".into(),
            income_shock: 0.0,
            apr_multiplier: 1.0,
            inflation_annual: 0.0,
            onset_month: 1,
            duration_months: 0,
        }
    }

    /// A permanent income drop of `shock` (e.g. `-0.15`) from month one.
    pub fn income_drop(name: &str, shock: f64) -> Self {
        ScenarioSpec { name: name.into(), income_shock: shock, ..ScenarioSpec::baseline() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::validation("name", "must not be empty"));
        }
        for (field, v) in [
            ("income_shock", self.income_shock),
            ("apr_multiplier", self.apr_multiplier),
            ("inflation_annual", self.inflation_annual),
        ] {
            if !v.is_finite() {
                return Err(Error::validation(field, format!("{v} is not finite")));
            }
        }
        if self.apr_multiplier <= 0.0 {
            return Err(Error::validation("apr_multiplier", format!("{} must be positive", self.apr_multiplier)));
        }
        if self.income_shock < -1.0 {
            return Err(Error::validation("income_shock", "cannot remove more than all income"));
        }
        if self.inflation_annual <= -1.0 {
            return Err(Error::validation("inflation_annual", "must exceed -1"));
        }
        if self.onset_month == 0 {
            return Err(Error::validation("onset_month", "months are numbered from 1"));
        }
        Ok(())
    }

    pub fn is_active(&self, month: u32) -> bool {
        month >= self.onset_month && (self.duration_months == 0 || month < self.onset_month + self.duration_months)
    }
}

/// Cash flows of one simulated month, all in cents.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthFlows {
    pub income: Money,
    pub savings_withdrawal: Money,
    pub expenses_paid: Money,
    pub debt_service: Money,
    pub savings_deposit: Money,
    pub residual_cash: Money,
}

impl MonthFlows {
    /// `sources − uses`; zero when the month balances.
    pub fn imbalance(&self) -> SignedMoney {
        self.income + self.savings_withdrawal - self.expenses_paid - self.debt_service - self.savings_deposit - self.residual_cash
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub defaulted: bool,
    pub default_month: Option<u32>,
    /// Month in which the debt balance reached zero; `Some(0)` when it started at zero.
    pub debt_cleared_month: Option<u32>,
    pub final_savings: Money,
    pub final_debt: Money,
    /// Lowest month-end savings balance after withdrawals (negative on default).
    pub min_cash_buffer: SignedMoney,
    /// Monthly expenses due in the last simulated month.
    pub final_monthly_expenses: Money,
    pub dti_series: Vec<f64>,
    pub ser_series: Vec<f64>,
    pub flows: Vec<MonthFlows>,
}

fn validate_horizon(scenario: &ScenarioSpec, horizon_months: u32) -> Result<()> {
    if horizon_months == 0 {
        return Err(Error::validation("horizon", "must be at least one month"));
    }
    if scenario.onset_month > horizon_months {
        return Err(Error::validation(
            "onset_month",
            format!("month {} is beyond the {horizon_months}-month horizon", scenario.onset_month),
        ));
    }
    Ok(())
}

/// Simulates one household under one rule and scenario.
pub fn run_trial(
    profile: &HouseholdProfile,
    rule: &AllocationRule,
    scenario: &ScenarioSpec,
    horizon_months: u32,
    rng: &mut TrialRng,
) -> Result<TrialOutcome> {
    profile.validate()?;
    scenario.validate()?;
    validate_horizon(scenario, horizon_months)?;

    let months = horizon_months as usize;
    let mut income_shocks = Vec::with_capacity(months);
    let mut market_shocks = Vec::with_capacity(months);
    for _ in 0..months {
        let (zi, zm) = correlated_normal_pair(profile.rho, rng)?;
        income_shocks.push(zi);
        market_shocks.push(zm);
    }
    let path_cfg = PathConfig { horizon_years: months as f64 * MONTH, dt_years: MONTH, trials: 1, master_seed: 0 };
    let income_path = income_path_from_shocks(profile.income(), profile.mu, profile.sigma_income, &path_cfg, &income_shocks)?;

    let baseline_monthly = profile.baseline_expenses.to_f64() * MONTH;
    let monthly_inflation = (1.0 + scenario.inflation_annual).powf(MONTH);
    let market_scale = profile.sigma_market * MONTH.sqrt();

    let mut price_level = 1.0;
    let mut debt = profile.debt_balance;
    // Savings balance in cents, kept unrounded between months.
    let mut savings = 0.0f64;
    let mut out = TrialOutcome {
        defaulted: false,
        default_month: None,
        debt_cleared_month: (debt == Money::ZERO).then_some(0),
        final_savings: Money::ZERO,
        final_debt: debt,
        min_cash_buffer: Money::ZERO,
        final_monthly_expenses: Money::ZERO,
        dti_series: Vec::with_capacity(months),
        ser_series: Vec::with_capacity(months),
        flows: Vec::with_capacity(months),
    };
    let mut min_buffer = f64::INFINITY;

    for month in 1..=horizon_months {
        let m = (month - 1) as usize;
        let active = scenario.is_active(month);
        let shock = if active { scenario.income_shock } else { 0.0 };
        let paycheck = Money::from_f64(income_path.values[m].to_f64() * MONTH * (1.0 + shock)).max(Money::ZERO);
        let buckets = make_allocation(paycheck, &rule.fractions)?;

        if active {
            price_level *= monthly_inflation;
        }
        let due = Money::from_f64(baseline_monthly * price_level);
        let expense_shortfall = (due - buckets.expenses()).max(Money::ZERO);
        let expense_surplus = (buckets.expenses() - due).max(Money::ZERO);

        let apr = profile.debt_apr * if active { scenario.apr_multiplier } else { 1.0 };
        let interest = Money::from_f64(debt.to_f64() * apr * MONTH).max(Money::ZERO);
        let payment = buckets.debt();
        let (interest_shortfall, principal, debt_surplus) = if payment >= interest {
            let principal = (payment - interest).min(debt);
            (Money::ZERO, principal, payment - interest - principal)
        } else {
            (interest - payment, Money::ZERO, Money::ZERO)
        };
        let withdrawal = expense_shortfall + interest_shortfall;

        let growth = (1.0 + profile.r_savings * MONTH + market_scale * market_shocks[m]).max(0.0);
        let deposit = buckets.savings();
        let after = savings * growth + deposit.cents() as f64 - withdrawal.cents() as f64;
        min_buffer = min_buffer.min(after);
        out.final_monthly_expenses = due;
        if after < 0.0 {
            out.defaulted = true;
            out.default_month = Some(month);
            break;
        }
        savings = after;

        debt = debt - principal;
        if debt == Money::ZERO && out.debt_cleared_month.is_none() {
            out.debt_cleared_month = Some(month);
        }

        let debt_service = interest + principal;
        let flows = MonthFlows {
            income: paycheck,
            savings_withdrawal: withdrawal,
            expenses_paid: due,
            debt_service,
            savings_deposit: deposit,
            residual_cash: expense_surplus + debt_surplus,
        };
        debug_assert_eq!(flows.imbalance(), Money::ZERO);
        out.flows.push(flows);
        out.dti_series.push(ratio(debt_service, paycheck));
        out.ser_series.push(ratio(deposit, due));
    }

    out.final_debt = debt;
    out.final_savings = Money::from_cents(savings.max(0.0).round() as i64);
    out.min_cash_buffer = Money::from_cents(min_buffer.round() as i64);
    Ok(out)
}

fn ratio(num: Money, den: Money) -> f64 {
    match (num.cents(), den.cents()) {
        (0, _) => 0.0,
        (_, 0) => f64::INFINITY,
        (n, d) => n as f64 / d as f64,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StressMetrics {
    pub trials: u64,
    pub default_rate: f64,
    /// Lower median over trials; `None` when at least half never clear.
    pub median_debt_clearance_years: Option<f64>,
    pub mean_final_savings: Money,
    /// Mean of final savings over final monthly expenses.
    pub months_expense_coverage: f64,
    /// Share of simulated months with DTI above the limit.
    pub dti_violation_rate: f64,
    /// Share of simulated months with SER below the floor.
    pub ser_violation_rate: f64,
}

/// Per-trial figures kept after a trial finishes.
#[derive(Clone, Copy, Debug, PartialEq)]
struct TrialSummary {
    defaulted: bool,
    cleared_month: Option<u32>,
    final_savings: Money,
    coverage: f64,
    months: usize,
    dti_violations: usize,
    ser_violations: usize,
}

impl TrialSummary {
    fn of(outcome: &TrialOutcome, risk: &RiskParams) -> Self {
        let expenses = outcome.final_monthly_expenses.to_f64();
        let coverage = if expenses > 0.0 { outcome.final_savings.to_f64() / expenses } else { 0.0 };
        TrialSummary {
            defaulted: outcome.defaulted,
            cleared_month: outcome.debt_cleared_month,
            final_savings: outcome.final_savings,
            coverage,
            months: outcome.dti_series.len(),
            dti_violations: outcome.dti_series.iter().filter(|&&d| d > risk.dti_limit).count(),
            ser_violations: outcome.ser_series.iter().filter(|&&s| s < risk.ser_floor).count(),
        }
    }
}

fn aggregate(summaries: &[TrialSummary]) -> StressMetrics {
    let n = summaries.len();
    let defaults = summaries.iter().filter(|s| s.defaulted).count();
    let mut clearance: Vec<u32> = summaries.iter().map(|s| s.cleared_month.unwrap_or(u32::MAX)).collect();
    clearance.sort_unstable();
    let median = clearance[(n - 1) / 2];
    let savings_cents: i128 = summaries.iter().map(|s| s.final_savings.cents() as i128).sum();
    let months: usize = summaries.iter().map(|s| s.months).sum();
    let rate = |count: usize| if months == 0 { 0.0 } else { count as f64 / months as f64 };
    StressMetrics {
        trials: n as u64,
        default_rate: defaults as f64 / n as f64,
        median_debt_clearance_years: (median != u32::MAX).then(|| median as f64 / 12.0),
        mean_final_savings: Money::from_cents(crate::domain::div_round(savings_cents, n as i128) as i64),
        months_expense_coverage: summaries.iter().map(|s| s.coverage).sum::<f64>() / n as f64,
        dti_violation_rate: rate(summaries.iter().map(|s| s.dti_violations).sum()),
        ser_violation_rate: rate(summaries.iter().map(|s| s.ser_violations).sum()),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StressOptions {
    /// Worker threads; `0` uses every core. Results do not depend on it.
    pub threads: usize,
    pub risk: RiskParams,
}

impl Default for StressOptions {
    fn default() -> Self {
        StressOptions { threads: 0, risk: RiskParams::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StressResult {
    pub profile_id: String,
    pub rule: String,
    pub scenario: String,
    pub metrics: StressMetrics,
}

/// Horizon in months for a monthly path configuration.
pub fn horizon_months(cfg: &PathConfig) -> Result<u32> {
    let steps = cfg.steps()?;
    if (cfg.dt_years - MONTH).abs() > 1e-12 {
        return Err(Error::validation("dt", "stress runs step monthly; dt must be 1/12"));
    }
    u32::try_from(steps).map_err(|_| Error::validation("horizon", "too many months"))
}

/// Runs every (profile, rule, scenario) combination over `cfg.trials`
/// seeded trials. Trial `i` uses the stream derived from
/// `(cfg.master_seed, i)` in every combination.
pub fn run_stress(
    profiles: &[HouseholdProfile],
    rules: &[AllocationRule],
    scenarios: &[ScenarioSpec],
    cfg: &PathConfig,
    options: &StressOptions,
) -> Result<Vec<StressResult>> {
    let months = horizon_months(cfg)?;
    for p in profiles {
        p.validate()?;
    }
    for s in scenarios {
        s.validate()?;
        validate_horizon(s, months)?;
    }
    let mut results = Vec::with_capacity(profiles.len() * rules.len() * scenarios.len());
    for profile in profiles {
        for rule in rules {
            for scenario in scenarios {
                let summaries = map_trials(cfg.master_seed, cfg.trials, options.threads, |_, rng| {
                    run_trial(profile, rule, scenario, months, rng).map(|o| TrialSummary::of(&o, &options.risk))
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
                results.push(StressResult {
                    profile_id: profile.id.clone(),
                    rule: rule.id.to_string(),
                    scenario: scenario.name.clone(),
                    metrics: aggregate(&summaries),
                });
            }
        }
    }
    Ok(results)
}

/// Years to repay `debt_balance` with level `annual_payment` at `apr`,
/// compounding once per payment period.
pub fn debt_clearance_time(debt_balance: Money, annual_payment: Money, apr: f64) -> Result<f64> {
    if annual_payment.cents() <= 0 {
        return Err(Error::validation("annual_payment", "must be positive"));
    }
    if debt_balance.is_negative() {
        return Err(Error::validation("debt_balance", "must be nonnegative"));
    }
    if !(apr.is_finite() && apr >= 0.0) {
        return Err(Error::validation("apr", "must be a nonnegative rate"));
    }
    let b = debt_balance.to_f64();
    let p = annual_payment.to_f64();
    if apr == 0.0 {
        return Ok(b / p);
    }
    let interest = b * apr;
    if p <= interest {
        return Err(Error::NeverClears { payment: p, interest });
    }
    Ok(-(1.0 - interest / p).ln() / apr.ln_1p())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnuityConvention {
    /// Annual contributions at the end of each year.
    #[default]
    OrdinaryAnnual,
    /// Annual contributions at the start of each year.
    DueAnnual,
    /// A twelfth of the contribution at the end of each month, compounding monthly.
    Monthly,
}

impl std::str::FromStr for AnnuityConvention {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ordinary_annual" => Ok(AnnuityConvention::OrdinaryAnnual),
            "due_annual" => Ok(AnnuityConvention::DueAnnual),
            "monthly" => Ok(AnnuityConvention::Monthly),
            other => Err(Error::validation("convention", format!("unknown annuity convention `{other}`"))),
        }
    }
}

/// Future value of level contributions after `years`.
pub fn savings_future_value(annual_contribution: Money, rate: f64, years: u32, convention: AnnuityConvention) -> Result<Money> {
    if annual_contribution.is_negative() {
        return Err(Error::validation("annual_contribution", "must be nonnegative"));
    }
    if !(rate.is_finite() && rate > -1.0) {
        return Err(Error::validation("rate", "must be a finite rate above -100%"));
    }
    let c = annual_contribution.to_f64();
    let n = years as f64;
    if rate == 0.0 {
        return Ok(Money::from_f64(c * n));
    }
    let factor = |r: f64, periods: f64| (r.ln_1p() * periods).exp_m1() / r;
    let fv = match convention {
        AnnuityConvention::OrdinaryAnnual => c * factor(rate, n),
        AnnuityConvention::DueAnnual => c * factor(rate, n) * (1.0 + rate),
        AnnuityConvention::Monthly => c / 12.0 * factor(rate / 12.0, 12.0 * n),
    };
    Ok(Money::from_f64(fv))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub scenario: String,
    pub profile_id: String,
    pub rule: String,
    /// 1 is best.
    pub rank: usize,
    pub default_rate: f64,
    pub median_clearance_years: Option<f64>,
    pub months_coverage: f64,
    /// Differences from the best-ranked rule in the same group.
    pub delta_default_rate: f64,
    pub delta_clearance_years: Option<f64>,
    pub delta_coverage: f64,
}

fn rank_order(a: &StressMetrics, b: &StressMetrics) -> Ordering {
    let clearance = |m: &StressMetrics| m.median_debt_clearance_years.unwrap_or(f64::INFINITY);
    a.default_rate
        .total_cmp(&b.default_rate)
        .then(clearance(a).total_cmp(&clearance(b)))
        .then(b.months_expense_coverage.total_cmp(&a.months_expense_coverage))
}

/// Ranks rules within each (scenario, profile) group by default rate, then
/// clearance time, then expense coverage. Every group must cover the same
/// rules exactly once.
pub fn compare_rules(results: &[StressResult]) -> Result<Vec<ComparisonRow>> {
    if results.is_empty() {
        return Err(Error::validation("metrics", "nothing to compare"));
    }
    let mut groups: BTreeMap<(&str, &str), Vec<&StressResult>> = BTreeMap::new();
    for r in results {
        groups.entry((r.scenario.as_str(), r.profile_id.as_str())).or_default().push(r);
    }
    fn rule_set<'a>(g: &[&'a StressResult]) -> BTreeSet<&'a str> {
        g.iter().map(|r| r.rule.as_str()).collect()
    }
    let reference = rule_set(groups.values().next().expect("nonempty"));
    for ((scenario, profile), g) in &groups {
        let rules = rule_set(g);
        if rules.len() != g.len() {
            return Err(Error::validation("metrics", format!("duplicate rule for scenario `{scenario}`, profile `{profile}`")));
        }
        if rules != reference {
            return Err(Error::validation(
                "metrics",
                format!("scenario `{scenario}`, profile `{profile}` covers rules {rules:?}, expected {reference:?}"),
            ));
        }
    }

    let mut rows = Vec::with_capacity(results.len());
    for ((scenario, profile), mut g) in groups {
        g.sort_by(|a, b| rank_order(&a.metrics, &b.metrics).then(a.rule.cmp(&b.rule)));
        let best = &g[0].metrics;
        for (i, r) in g.iter().enumerate() {
            let m = &r.metrics;
            let delta_clearance = match (m.median_debt_clearance_years, best.median_debt_clearance_years) {
                (Some(a), Some(b)) => Some(a - b),
                _ => None,
            };
            rows.push(ComparisonRow {
                scenario: scenario.to_string(),
                profile_id: profile.to_string(),
                rule: r.rule.clone(),
                rank: i + 1,
                default_rate: m.default_rate,
                median_clearance_years: m.median_debt_clearance_years,
                months_coverage: m.months_expense_coverage,
                delta_default_rate: m.default_rate - best.default_rate,
                delta_clearance_years: delta_clearance,
                delta_coverage: m.months_expense_coverage - best.months_expense_coverage,
            });
        }
    }
    Ok(rows)
}
