//! Checks against independent reference computations and pinned golden files.

use std::path::PathBuf;

use thirdrule::domain::{AllocationRule, HouseholdProfile, HouseholdType, Money};
use thirdrule::dynamic::{solve_plan, Action, DynamicConfig, HouseholdState, StateGrid};
use thirdrule::game::{shapley_values, CoalitionGameSpec};
use thirdrule::io::{emit_report, format_float, load_report, ReportFormat};
use thirdrule::quadrature::gauss_hermite;
use thirdrule::stochastic::{derive_trial_rng, PathConfig};
use thirdrule::stress::{
    compare_rules, debt_clearance_time, run_stress, run_trial, savings_future_value, AnnuityConvention, ScenarioSpec,
    StressOptions,
};
use thirdrule::utility::{optimal_allocation, utility_at, UtilityParams};

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Compares against a pinned file; `UPDATE_GOLDEN=1` rewrites it.
fn check_golden(name: &str, actual: &str) {
    let path = golden(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "golden file {name} differs");
}

#[test]
fn hermite_rule_matches_reference() {
    let x_ref = [-2.6519613568352334, -1.6735516287674714, -0.8162878828589646, 0.0, 0.8162878828589646, 1.6735516287674714, 2.6519613568352334];
    let w_ref = [0.0009717812450995199, 0.05451558281912705, 0.4256072526101278, 0.8102646175568072, 0.4256072526101278, 0.05451558281912705, 0.0009717812450995199];
    let (x, w) = gauss_hermite(7).unwrap();
    for i in 0..7 {
        assert!((x[i] - x_ref[i]).abs() < 1e-13, "node {i}");
        assert!((w[i] - w_ref[i]).abs() < 1e-13, "weight {i}");
    }
}

/// Golden-section search along each budget line, nested: maximizes U over
/// the simplex without using the closed form.
fn search_optimum(params: &UtilityParams, income: f64) -> [f64; 3] {
    let golden = |lo: f64, hi: f64, f: &dyn Fn(f64) -> f64| {
        let r = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let c = b - r * (b - a);
            let d = a + r * (b - a);
            if f(c) < f(d) {
                a = c;
            } else {
                b = d;
            }
        }
        (a + b) / 2.0
    };
    let inner = |d: f64| {
        let rest = income - d;
        let s = golden(0.0, rest, &|s| utility_at(params, [d, s, rest - s]));
        (s, utility_at(params, [d, s, rest - s]))
    };
    let d = golden(0.0, income, &|d| inner(d).1);
    let s = inner(d).0;
    [d, s, income - d - s]
}

#[test]
fn closed_form_optimum_matches_search() {
    for (a, b, income) in [(0.2, 0.3, 50_000.0), (0.5, 0.25, 12_345.0), (0.1, 0.1, 90_000.0), (1.0 / 3.0, 1.0 / 3.0, 41_000.0)] {
        let p = UtilityParams::new(a, b, 1.0 - a - b).unwrap();
        let closed = optimal_allocation(&p, Money::from_f64(income)).unwrap().as_f64();
        let searched = search_optimum(&p, income);
        for k in 0..3 {
            assert!((closed[k] - searched[k]).abs() < 0.02, "{a},{b}: {closed:?} vs {searched:?}");
        }
    }
}

#[test]
fn shapley_matches_permutations_with_subset_costs() {
    // Eight members with an arbitrary per-coalition cost table.
    let n = 8;
    let mut rng = derive_trial_rng(17, 0);
    let incomes: Vec<Money> = (0..n).map(|_| Money::from_cents((rng.next_f64() * 1e7) as i64)).collect();
    let mut costs: Vec<Money> = (0..1 << n).map(|_| Money::from_cents((rng.next_f64() * 1e5) as i64)).collect();
    costs[0] = Money::ZERO;
    let spec = CoalitionGameSpec::additive(incomes).with_subset_costs(costs);
    let v = spec.value_table().unwrap();

    let mut totals = vec![0i128; n];
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        let mut mask = 0usize;
        for &i in &perm {
            let before = v[mask].cents() as i128;
            mask |= 1 << i;
            totals[i] += v[mask].cents() as i128 - before;
        }
        // Next lexicographic permutation.
        let Some(k) = (0..n - 1).rev().find(|&k| perm[k] < perm[k + 1]) else { break };
        let l = (k + 1..n).rev().find(|&l| perm[k] < perm[l]).unwrap();
        perm.swap(k, l);
        perm[k + 1..].reverse();
    }
    assert_eq!(shapley_values(&spec).unwrap().numerators, totals);
}

#[test]
fn clearance_time_solves_amortization() {
    for (balance, payment, apr) in [(63000.0, 13667.0, 0.18), (120000.0, 30000.0, 0.12), (1000.0, 300.0, 0.05)] {
        let t = debt_clearance_time(Money::from_f64(balance), Money::from_f64(payment), apr).unwrap();
        let g = (1.0 + apr).powf(t);
        let remaining = balance * g - payment * (g - 1.0) / apr;
        assert!(remaining.abs() < 1e-6 * balance, "{balance} at {apr}: {remaining}");
    }
}

#[test]
fn annuity_conventions_match_summation() {
    let c = 24000.0_f64;
    let r = 0.04_f64;
    let ordinary: f64 = (0..5).map(|k| c * (1.0 + r).powi(k)).sum();
    let due: f64 = (1..=5).map(|k| c * (1.0 + r).powi(k)).sum();
    let monthly: f64 = (0..60).map(|k| c / 12.0 * (1.0 + r / 12.0).powi(k)).sum();
    for (conv, want) in [
        (AnnuityConvention::OrdinaryAnnual, ordinary),
        (AnnuityConvention::DueAnnual, due),
        (AnnuityConvention::Monthly, monthly),
    ] {
        let got = savings_future_value(Money::units(24000), r, 5, conv).unwrap().to_f64();
        assert!((got - want).abs() <= 0.005, "{conv:?}: {got} vs {want}");
    }
}

fn quiet_profile() -> HouseholdProfile {
    HouseholdProfile {
        id: "quiet".into(),
        household_type: HouseholdType::DualIncome,
        member_incomes: vec![Money::units(20000), Money::units(16000)],
        debt_balance: Money::units(20000),
        debt_apr: 0.12,
        baseline_expenses: Money::units(10000),
        sigma_income: 0.0,
        sigma_market: 0.0,
        rho: 0.0,
        mu: 0.0,
        r_savings: 0.04,
    }
}

#[test]
fn noiseless_trial_matches_closed_forms() {
    let p = quiet_profile();
    let o = run_trial(&p, &AllocationRule::one_third(), &ScenarioSpec::baseline(), 60, &mut derive_trial_rng(0, 0)).unwrap();
    assert!(!o.defaulted);
    let months = debt_clearance_time(p.debt_balance, Money::units(1000), 0.01).unwrap();
    let cleared = o.debt_cleared_month.unwrap() as f64;
    assert!((cleared - months.ceil()).abs() <= 1.0, "{cleared} vs {months}");
    let fv = savings_future_value(Money::units(12000), 0.04, 5, AnnuityConvention::Monthly).unwrap();
    assert!((o.final_savings.cents() - fv.cents()).abs() <= 1, "{} vs {fv}", o.final_savings);
}

fn pinned_profile() -> HouseholdProfile {
    HouseholdProfile {
        id: "pinned".into(),
        household_type: HouseholdType::SingleIncome,
        member_incomes: vec![Money::units(41000)],
        debt_balance: Money::units(63000),
        debt_apr: 0.18,
        baseline_expenses: Money::units(13667),
        sigma_income: 0.1,
        sigma_market: 0.15,
        rho: 0.2,
        mu: 0.02,
        r_savings: 0.04,
    }
}

#[test]
fn pinned_trial_outcome() {
    let scenario = ScenarioSpec { name: "mixed".into(), income_shock: -0.1, apr_multiplier: 1.5, inflation_annual: 0.05, onset_month: 13, duration_months: 24 };
    let o = run_trial(&pinned_profile(), &AllocationRule::one_third(), &scenario, 60, &mut derive_trial_rng(42, 0)).unwrap();
    let again = run_trial(&pinned_profile(), &AllocationRule::one_third(), &scenario, 60, &mut derive_trial_rng(42, 0)).unwrap();
    assert_eq!(o, again);
    check_golden("trial_seed42.json", &(serde_json::to_string_pretty(&o).unwrap() + "\n"));
}

fn pinned_results() -> Vec<thirdrule::stress::StressResult> {
    let cfg = PathConfig { horizon_years: 5.0, dt_years: 1.0 / 12.0, trials: 500, master_seed: 7 };
    let rules = [AllocationRule::one_third(), AllocationRule::fifty_thirty_twenty(), AllocationRule::seventy_twenty_ten()];
    let scenarios = [ScenarioSpec::baseline(), ScenarioSpec::income_drop("recession", -0.15)];
    run_stress(&[pinned_profile(), quiet_profile()], &rules, &scenarios, &cfg, &StressOptions::default()).unwrap()
}

#[test]
fn pinned_rule_comparison() {
    let rows = compare_rules(&pinned_results()).unwrap();
    assert_eq!(rows.len(), 12);
    check_golden("comparison.json", &(serde_json::to_string_pretty(&rows).unwrap() + "\n"));
}

#[test]
fn report_round_trip() {
    let results = pinned_results();
    let dir = tempfile::tempdir().unwrap();
    for format in [ReportFormat::Json, ReportFormat::Csv] {
        let path = dir.path().join("report");
        emit_report(&results, format, &path).unwrap();
        let first = std::fs::read(&path).unwrap();
        emit_report(&results, format, &path).unwrap();
        assert_eq!(first, std::fs::read(&path).unwrap());

        let rows = load_report(&path, format).unwrap();
        assert_eq!(rows.len(), results.len());
        let printed = |x: f64| format_float(x);
        for (row, r) in rows.iter().zip(&results) {
            let m = &r.metrics;
            assert_eq!((&row.profile_id, &row.rule, &row.scenario), (&r.profile_id, &r.rule, &r.scenario));
            assert_eq!(row.mean_final_savings, m.mean_final_savings);
            assert_eq!(printed(row.default_rate), printed(m.default_rate));
            assert_eq!(printed(row.months_coverage), printed(m.months_expense_coverage));
            assert_eq!(printed(row.dti_violation_rate), printed(m.dti_violation_rate));
            assert_eq!(printed(row.ser_violation_rate), printed(m.ser_violation_rate));
            assert_eq!(row.median_clearance_years.map(printed), m.median_debt_clearance_years.map(printed));
        }
    }
}

fn small_config(initial: &HouseholdState, horizon: usize, shock_std: f64, weight: f64) -> DynamicConfig {
    let mut cfg = DynamicConfig::default_for(initial).unwrap();
    let income = initial.income.to_f64();
    let linear = |n: usize, top: f64| (0..n).map(|i| top * i as f64 / (n - 1) as f64).collect::<Vec<_>>();
    cfg.state_grid = StateGrid {
        income: (0..5).map(|i| income * 0.5 * 2f64.powf(i as f64 / 2.0)).collect(),
        debt: linear(5, 2.0 * income),
        savings: linear(5, 2.0 * income),
    };
    cfg.horizon = horizon;
    cfg.shock_std = shock_std;
    cfg.state_utility_weight = weight;
    cfg.action_divisions = 12;
    cfg
}

fn initial() -> HouseholdState {
    HouseholdState::new(Money::units(60000), Money::units(30000), Money::units(10000)).unwrap()
}

#[test]
fn values_are_monotone_in_balances() {
    // A large weight makes the balance-sheet terms matter next to U.
    let cfg = small_config(&initial(), 4, 0.1, 5000.0);
    let p = solve_plan(&initial(), &cfg).unwrap();
    let g = &p.grid;
    let (ni, nd, ns) = (g.income.len(), g.debt.len(), g.savings.len());
    let idx = |i: usize, d: usize, s: usize| (i * nd + d) * ns + s;
    for t in 0..=p.horizon() {
        let v = &p.values[t];
        for i in 0..ni {
            for d in 0..nd {
                for s in 0..ns {
                    if s + 1 < ns {
                        assert!(v[idx(i, d, s + 1)] >= v[idx(i, d, s)] - 1e-9, "t {t}: savings");
                    }
                    if d + 1 < nd {
                        assert!(v[idx(i, d + 1, s)] <= v[idx(i, d, s)] + 1e-9, "t {t}: debt");
                    }
                }
            }
        }
    }
}

#[test]
fn stored_values_satisfy_bellman() {
    let cfg = small_config(&initial(), 3, 0.2, 100.0);
    let p = solve_plan(&initial(), &cfg).unwrap();
    let mut rng = derive_trial_rng(8, 0);
    for _ in 0..10 {
        let t = (rng.next_f64() * p.horizon() as f64) as usize;
        let node = (rng.next_f64() * p.grid.len() as f64) as usize;
        let v = p.bellman_objective(&cfg, t, node, p.action(t, node)).unwrap();
        let stored = p.values[t][node];
        assert!((v - stored).abs() <= 1e-8 * stored.abs().max(1.0), "t {t}, node {node}: {v} vs {stored}");
        // The stored action is a maximizer.
        for a in (0..=12).flat_map(|d| (0..=12 - d).map(move |s| Action { debt: d, savings: s })) {
            assert!(p.bellman_objective(&cfg, t, node, a).unwrap() <= stored + 1e-8 * stored.abs().max(1.0));
        }
    }
}

#[test]
fn noiseless_policy_is_stationary() {
    let one = solve_plan(&initial(), &small_config(&initial(), 1, 0.0, 0.0)).unwrap();
    let many = solve_plan(&initial(), &small_config(&initial(), 6, 0.0, 0.0)).unwrap();
    for t in 0..6 {
        for node in 0..many.grid.len() {
            assert_eq!(many.action(t, node), one.action(0, node));
        }
    }
    assert_eq!(one.max_l1_from_thirds(), 0.0);
}

#[test]
fn shrinking_noise_moves_policy_toward_thirds() {
    let mut last = f64::INFINITY;
    for sigma in [0.3, 0.1, 0.03, 0.0] {
        let p = solve_plan(&initial(), &small_config(&initial(), 3, sigma, 0.1)).unwrap();
        let l1 = p.max_l1_from_thirds();
        assert!(l1 <= last, "σ {sigma}: {l1} > {last}");
        last = l1;
    }
    assert!(last < 1.0 / 12.0);
}
