use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use thirdrule::adjust::{adjusted_allocation, adjustment_factors, zero_sum_defect, ProjectionMode};
use thirdrule::domain::{dti, parse_fraction, rule_allocation, ser, AllocationRule, Fractions, Money, RuleId};
use thirdrule::dynamic::{policy_adjustments, solve_plan, DynamicConfig, HouseholdState};
use thirdrule::error::{Error, Result};
use thirdrule::game::{coalition_value, first_superadditivity_violation, shapley_values, CoalitionGameSpec};
use thirdrule::io::{
    emit_report, format_float, load_profiles, load_report, load_scenarios, render_report, threads_from_env, ReportFormat,
};
use thirdrule::risk::{bankruptcy_probability, classify_stability, risk_score, RiskParams};
use thirdrule::stochastic::{correlated_normal_pair, income_path_from_shocks, map_trials, simulate_savings_path, PathConfig};
use thirdrule::stress::{compare_rules, run_stress, StressOptions};

/// Budget allocation analysis around the one-third rule.
#[derive(Parser, Debug)]
#[command(name = "thirdrule", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split an income into debt, savings and expenses.
    Allocate(AllocateArgs),
    /// Bankruptcy probability and stability flags for given ratios.
    Risk(RiskArgs),
    /// Simulate income and savings paths and summarize the horizon values.
    Simulate(SimulateArgs),
    /// Stress-test rules on household profiles and write a report.
    Stress(StressArgs),
    /// Exact Shapley values of a household coalition game.
    Shapley(GameArgs),
    /// Coalition value and superadditivity of a household game.
    Coalition(CoalitionArgs),
    /// Solve the dynamic allocation plan and print the first-period policy.
    Plan(PlanArgs),
    /// Volatility-adjusted allocation.
    Adjust(AdjustArgs),
    /// Re-emit or rank a stress report.
    Report(ReportArgs),
}

fn money(s: &str) -> std::result::Result<Money, String> {
    Money::from_str(s).map_err(|e| e.to_string())
}

/// A decimal or an exact `p/q` ratio.
fn number(s: &str) -> std::result::Result<f64, String> {
    match s.split_once('/') {
        Some(_) => parse_fraction(s).map(|r| *r.numer() as f64 / *r.denom() as f64).map_err(|e| e.to_string()),
        None => s.trim().parse().map_err(|_| format!("`{s}` is not a number")),
    }
}

#[derive(Args, Debug)]
struct AllocateArgs {
    /// Annual after-tax income.
    #[arg(long, allow_hyphen_values = true)]
    income: String,
    /// Preset rule: one_third, fifty_thirty_twenty, seventy_twenty_ten.
    #[arg(long, default_value = "one_third", conflicts_with = "fractions")]
    rule: String,
    /// Custom `debt,savings,expenses` fractions (decimals or p/q) summing to one.
    #[arg(long)]
    fractions: Option<String>,
}

#[derive(Args, Debug)]
struct RiskParamArgs {
    #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
    beta1: f64,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    beta2: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    beta3: f64,
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    beta4: f64,
    /// Largest stable debt-to-income ratio.
    #[arg(long, default_value_t = 0.36)]
    dti_limit: f64,
    /// Smallest stable savings-to-expense ratio.
    #[arg(long, default_value_t = 1.0)]
    ser_floor: f64,
}

impl RiskParamArgs {
    fn params(&self) -> Result<RiskParams> {
        let rp = RiskParams {
            beta1: self.beta1,
            beta2: self.beta2,
            beta3: self.beta3,
            beta4: self.beta4,
            dti_limit: self.dti_limit,
            ser_floor: self.ser_floor,
        };
        rp.validate()?;
        Ok(rp)
    }
}

#[derive(Args, Debug)]
struct RiskArgs {
    /// Debt-to-income ratio; or give --debt-payment and --income.
    #[arg(long, allow_hyphen_values = true)]
    dti: Option<f64>,
    /// Savings-to-expense ratio; or give --savings and --expenses.
    #[arg(long, allow_hyphen_values = true)]
    ser: Option<f64>,
    #[arg(long, value_parser = money, allow_hyphen_values = true)]
    debt_payment: Option<Money>,
    #[arg(long, value_parser = money, allow_hyphen_values = true)]
    income: Option<Money>,
    #[arg(long, value_parser = money, allow_hyphen_values = true)]
    savings: Option<Money>,
    #[arg(long, value_parser = money, allow_hyphen_values = true)]
    expenses: Option<Money>,
    #[arg(long, default_value_t = 0.0)]
    sigma_income: f64,
    #[arg(long, default_value_t = 0.0)]
    sigma_market: f64,
    #[command(flatten)]
    risk: RiskParamArgs,
}

#[derive(Args, Debug)]
struct PathArgs {
    /// Horizon in years.
    #[arg(long, default_value = "5", value_parser = number)]
    horizon: f64,
    /// Step in years (decimal or p/q).
    #[arg(long, default_value = "1/12", value_parser = number)]
    dt: f64,
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl PathArgs {
    fn config(&self) -> PathConfig {
        PathConfig { horizon_years: self.horizon, dt_years: self.dt, trials: self.trials, master_seed: self.seed }
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Initial annual income.
    #[arg(long, value_parser = money, allow_hyphen_values = true)]
    income: Money,
    /// Annual income drift.
    #[arg(long, default_value_t = 0.02, allow_hyphen_values = true)]
    mu: f64,
    #[arg(long, default_value_t = 0.1)]
    sigma_income: f64,
    /// Savings contribution per step.
    #[arg(long, value_parser = money, allow_hyphen_values = true)]
    contribution: Money,
    #[arg(long, default_value_t = 0.04, allow_hyphen_values = true)]
    r_savings: f64,
    #[arg(long, default_value_t = 0.15)]
    sigma_market: f64,
    /// Income/market shock correlation.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    rho: f64,
    #[command(flatten)]
    path: PathArgs,
}

#[derive(Args, Debug)]
struct StressArgs {
    /// Household profile CSV.
    #[arg(long)]
    profiles: PathBuf,
    /// Scenario JSON (object or array).
    #[arg(long)]
    scenarios: PathBuf,
    /// Comma-separated preset rule ids.
    #[arg(long, default_value = "one_third,fifty_thirty_twenty,seventy_twenty_ten")]
    rules: String,
    #[command(flatten)]
    path: PathArgs,
    /// Report path; printed to stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// json or csv; defaults to the output extension, else json.
    #[arg(long)]
    format: Option<String>,
    #[command(flatten)]
    risk: RiskParamArgs,
}

#[derive(Args, Debug)]
struct GameArgs {
    /// Comma-separated member incomes.
    #[arg(long, value_parser = money, value_delimiter = ',', num_args = 1..)]
    incomes: Vec<Money>,
    /// Scale benefit θ(k) for coalitions of size k = 1, 2, …
    #[arg(long, value_parser = money, value_delimiter = ',', num_args = 1..)]
    scale_benefit: Option<Vec<Money>>,
    /// Coordination cost c(k) for coalitions of size k = 1, 2, …
    #[arg(long, value_parser = money, value_delimiter = ',', num_args = 1..)]
    coordination_cost: Option<Vec<Money>>,
}

impl GameArgs {
    fn spec(&self) -> CoalitionGameSpec {
        let mut spec = CoalitionGameSpec::additive(self.incomes.clone());
        if let Some(t) = &self.scale_benefit {
            spec = spec.with_scale_benefit(t.clone());
        }
        if let Some(c) = &self.coordination_cost {
            spec = spec.with_coordination_cost(c.clone());
        }
        spec
    }
}

#[derive(Args, Debug)]
struct CoalitionArgs {
    #[command(flatten)]
    game: GameArgs,
    /// Zero-based member indices; the whole household when omitted.
    #[arg(long, value_delimiter = ',')]
    members: Option<Vec<usize>>,
}

#[derive(Args, Debug)]
struct PlanArgs {
    #[arg(long, value_parser = money)]
    income: Money,
    #[arg(long, value_parser = money, default_value = "0")]
    debt: Money,
    #[arg(long, value_parser = money, default_value = "0")]
    savings: Money,
    /// Planning periods (years).
    #[arg(long, default_value_t = 10)]
    horizon: usize,
    #[arg(long, default_value_t = 0.96)]
    discount: f64,
    #[arg(long, default_value_t = 0.18)]
    debt_apr: f64,
    #[arg(long, default_value_t = 0.04, allow_hyphen_values = true)]
    savings_return: f64,
    #[arg(long, default_value_t = 0.02, allow_hyphen_values = true)]
    income_growth: f64,
    /// Standard deviation of the log income shock.
    #[arg(long, default_value_t = 0.1)]
    shock_std: f64,
    /// Gauss–Hermite nodes for the shock expectation.
    #[arg(long, default_value_t = 7)]
    shock_samples: usize,
    /// Weight on the balance-sheet reward.
    #[arg(long, default_value_t = 0.1)]
    state_weight: f64,
}

#[derive(Args, Debug)]
struct AdjustArgs {
    #[arg(long, value_parser = money, allow_hyphen_values = true)]
    income: Money,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    sigma_income: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    sigma_market: f64,
    /// residual_expenses or proportional_rescale.
    #[arg(long, default_value = "residual_expenses")]
    mode: String,
    #[command(flatten)]
    risk: RiskParamArgs,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Report written by `stress`.
    #[arg(long)]
    input: PathBuf,
    /// Format of the input; defaults to its extension.
    #[arg(long)]
    input_format: Option<String>,
    /// Output format for re-emission: json or csv.
    #[arg(long, default_value = "json")]
    format: String,
    /// Rank rules per scenario and profile instead of re-emitting.
    #[arg(long)]
    compare: bool,
}

fn format_for(explicit: Option<&str>, path: Option<&Path>) -> Result<ReportFormat> {
    match (explicit, path.and_then(ReportFormat::from_path)) {
        (Some(f), _) => f.parse(),
        (None, Some(f)) => Ok(f),
        (None, None) => Ok(ReportFormat::Json),
    }
}

fn parse_rules(list: &str) -> Result<Vec<AllocationRule>> {
    list.split(',').map(|id| AllocationRule::preset(RuleId::from_str(id.trim())?)).collect()
}

fn allocate(a: &AllocateArgs) -> Result<()> {
    let income = Money::from_str(&a.income).map_err(|e| match e {
        Error::Validation { message, .. } => Error::Validation { field: "income".into(), message },
        other => other,
    })?;
    if income.is_negative() {
        return Err(Error::Validation { field: "income".into(), message: format!("{income} is negative") });
    }
    let rule = match &a.fractions {
        Some(f) => AllocationRule::new(RuleId::Custom, Fractions::parse(f)?),
        None => AllocationRule::preset(RuleId::from_str(&a.rule)?)?,
    };
    let alloc = rule_allocation(&rule, income)?;
    println!("rule: {}", rule.id);
    println!("debt: {}", alloc.debt());
    println!("savings: {}", alloc.savings());
    println!("expenses: {}", alloc.expenses());
    Ok(())
}

fn risk(a: &RiskArgs) -> Result<()> {
    let rp = a.risk.params()?;
    let dti_value = match (a.dti, a.debt_payment, a.income) {
        (Some(v), _, _) => v,
        (None, Some(p), Some(i)) => dti(p, i)?,
        _ => return Err(Error::Validation { field: "dti".into(), message: "give --dti or both --debt-payment and --income".into() }),
    };
    let ser_value = match (a.ser, a.savings, a.expenses) {
        (Some(v), _, _) => v,
        (None, Some(s), Some(e)) => ser(s, e)?,
        _ => return Err(Error::Validation { field: "ser".into(), message: "give --ser or both --savings and --expenses".into() }),
    };
    let flags = classify_stability(&rp, dti_value, ser_value);
    println!("dti: {}", format_float(dti_value));
    println!("ser: {}", format_float(ser_value));
    println!("risk_score: {}", format_float(risk_score(&rp, dti_value, ser_value, a.sigma_income, a.sigma_market)));
    println!(
        "bankruptcy_probability: {}",
        format_float(bankruptcy_probability(&rp, dti_value, ser_value, a.sigma_income, a.sigma_market))
    );
    println!("dti_ok: {}", flags.dti_ok);
    println!("ser_ok: {}", flags.ser_ok);
    println!("stable: {}", flags.stable());
    Ok(())
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let cfg = a.path.config();
    let steps = cfg.steps()?;
    let threads = threads_from_env()?;
    let finals = map_trials(cfg.master_seed, cfg.trials, threads, |_, rng| -> Result<(f64, f64)> {
        let mut zi = Vec::with_capacity(steps);
        let mut zm = Vec::with_capacity(steps);
        for _ in 0..steps {
            let (a, b) = correlated_normal_pair(a.rho, rng)?;
            zi.push(a);
            zm.push(b);
        }
        let income = income_path_from_shocks(a.income, a.mu, a.sigma_income, &cfg, &zi)?;
        let savings = simulate_savings_path(Money::ZERO, a.contribution, a.r_savings, a.sigma_market, &cfg, rng, Some(&zm))?;
        Ok((income.last().to_f64(), savings.last().to_f64()))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let (incomes, savings): (Vec<f64>, Vec<f64>) = finals.into_iter().unzip();
    let (im, isd) = mean_sd(&incomes);
    let (sm, ssd) = mean_sd(&savings);
    println!("trials: {}", cfg.trials);
    println!("steps: {steps}");
    println!("final_income_mean: {}", format_float(im));
    println!("final_income_sd: {}", format_float(isd));
    println!("final_savings_mean: {}", format_float(sm));
    println!("final_savings_sd: {}", format_float(ssd));
    Ok(())
}

fn stress(a: &StressArgs) -> Result<()> {
    let format = format_for(a.format.as_deref(), a.output.as_deref())?;
    let rules = parse_rules(&a.rules)?;
    let risk = a.risk.params()?;
    let profiles = load_profiles(&a.profiles)?;
    let scenarios = load_scenarios(&a.scenarios)?;
    let threads = threads_from_env()?;
    let results = run_stress(&profiles, &rules, &scenarios, &a.path.config(), &StressOptions { threads, risk })?;
    match &a.output {
        Some(path) => emit_report(&results, format, path),
        None => {
            let rows: Vec<_> = results.iter().map(Into::into).collect();
            print!("{}", render_report(&rows, format)?);
            Ok(())
        }
    }
}

fn shapley(a: &GameArgs) -> Result<()> {
    let spec = a.spec();
    let result = shapley_values(&spec)?;
    for (i, v) in result.values.iter().enumerate() {
        println!("member {i}: {v} (exact {})", format_float(result.exact_units(i)));
    }
    println!("total: {}", result.values.iter().copied().sum::<Money>());
    Ok(())
}

fn coalition(a: &CoalitionArgs) -> Result<()> {
    let spec = a.game.spec();
    spec.validate()?;
    let members: Vec<usize> = a.members.clone().unwrap_or_else(|| (0..spec.len()).collect());
    println!("value: {}", coalition_value(&spec, &members)?);
    match first_superadditivity_violation(&spec)? {
        None => println!("superadditive: true"),
        Some((s, t)) => println!("superadditive: false (coalitions {s:#b} and {t:#b})"),
    }
    Ok(())
}

fn plan(a: &PlanArgs) -> Result<()> {
    let initial = HouseholdState::new(a.income, a.debt, a.savings)?;
    let mut cfg = DynamicConfig::default_for(&initial)?;
    cfg.horizon = a.horizon;
    cfg.discount = a.discount;
    cfg.debt_apr = a.debt_apr;
    cfg.savings_return = a.savings_return;
    cfg.income_growth = a.income_growth;
    cfg.shock_std = a.shock_std;
    cfg.shock_samples = a.shock_samples;
    cfg.state_utility_weight = a.state_weight;
    let policy = solve_plan(&initial, &cfg)?;
    let node = policy.grid.nearest_node(initial.as_f64());
    let [d, s, e] = policy.fractions(0, node);
    let [ad, as_, ae] = policy_adjustments(&policy, 0, &initial)?;
    println!("debt_fraction: {d}");
    println!("savings_fraction: {s}");
    println!("expenses_fraction: {e}");
    println!("alpha_d: {ad}");
    println!("alpha_s: {as_}");
    println!("alpha_e: {ae}");
    println!("value: {}", format_float(policy.values[0][node]));
    println!("max_l1_from_thirds: {}", format_float(policy.max_l1_from_thirds()));
    Ok(())
}

fn adjust(a: &AdjustArgs) -> Result<()> {
    let rp = a.risk.params()?;
    let mode = ProjectionMode::from_str(&a.mode)?;
    let f = adjustment_factors(&rp, a.sigma_income, a.sigma_market)?;
    let alloc = adjusted_allocation(a.income, &f, mode)?;
    println!("alpha_d: {}", format_float(f.alpha_d));
    println!("alpha_s: {}", format_float(f.alpha_s));
    println!("alpha_e: {}", format_float(f.alpha_e));
    println!("clamped: {}", f.clamped);
    println!("zero_sum_defect: {}", format_float(zero_sum_defect(&f)));
    println!("debt: {}", alloc.debt());
    println!("savings: {}", alloc.savings());
    println!("expenses: {}", alloc.expenses());
    Ok(())
}

fn report(a: &ReportArgs) -> Result<()> {
    let input_format = format_for(a.input_format.as_deref(), Some(&a.input))?;
    let rows = load_report(&a.input, input_format)?;
    if !a.compare {
        print!("{}", render_report(&rows, a.format.parse()?)?);
        return Ok(());
    }
    let results: Vec<_> = rows
        .iter()
        .map(|r| thirdrule::stress::StressResult {
            profile_id: r.profile_id.clone(),
            rule: r.rule.clone(),
            scenario: r.scenario.clone(),
            metrics: thirdrule::stress::StressMetrics {
                trials: 0,
                default_rate: r.default_rate,
                median_debt_clearance_years: r.median_clearance_years,
                mean_final_savings: r.mean_final_savings,
                months_expense_coverage: r.months_coverage,
                dti_violation_rate: r.dti_violation_rate,
                ser_violation_rate: r.ser_violation_rate,
            },
        })
        .collect();
    println!("scenario,profile_id,rank,rule,default_rate,delta_default_rate,median_clearance_years,delta_clearance_years,months_coverage,delta_coverage");
    let opt = |x: Option<f64>| x.map(format_float).unwrap_or_default();
    for row in compare_rules(&results)? {
        println!(
            "{},{},{},{},{},{},{},{},{},{}",
            row.scenario,
            row.profile_id,
            row.rank,
            row.rule,
            format_float(row.default_rate),
            format_float(row.delta_default_rate),
            opt(row.median_clearance_years),
            opt(row.delta_clearance_years),
            format_float(row.months_coverage),
            format_float(row.delta_coverage),
        );
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Allocate(a) => allocate(a),
        Command::Risk(a) => risk(a),
        Command::Simulate(a) => simulate(a),
        Command::Stress(a) => stress(a),
        Command::Shapley(a) => shapley(a),
        Command::Coalition(a) => coalition(a),
        Command::Plan(a) => plan(a),
        Command::Adjust(a) => adjust(a),
        Command::Report(a) => report(a),
    }
}

/// Exit codes: 0 success, 1 usage or validation error, 2 I/O error.
fn cli_main<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(cli_main(std::env::args_os()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn number_accepts_ratios() {
        assert_eq!(number("1/12").unwrap(), 1.0 / 12.0);
        assert_eq!(number("0.5").unwrap(), 0.5);
        assert!(number("x").is_err());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(cli_main(["thirdrule", "bogus"]), 1);
        assert_eq!(cli_main(["thirdrule", "allocate", "--income", "100", "--nope"]), 1);
        assert_eq!(cli_main(["thirdrule", "--help"]), 0);
    }
}
