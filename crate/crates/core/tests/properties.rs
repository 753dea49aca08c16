use proptest::prelude::*;

use thirdrule::adjust::{adjusted_allocation, adjusted_shares, adjustment_factors, zero_sum_defect, AdjustmentFactors, ProjectionMode};
use thirdrule::domain::{
    classify_income, make_allocation, rule_allocation, ser, AllocationRule, Fraction, Fractions, HouseholdProfile,
    HouseholdType, Money,
};
use thirdrule::game::{
    coalition_value, nested_multigen_allocation, shapley_values, CoalitionGameSpec,
};
use thirdrule::risk::{bankruptcy_probability, RiskParams};
use thirdrule::stochastic::{derive_trial_rng, map_trials, simulate_income_path, simulate_savings_path, PathConfig};
use thirdrule::stress::{run_stress, run_trial, ScenarioSpec, StressOptions};
use thirdrule::utility::{deviation_curvature, deviation_utility_loss, hessian_at, utility_at, UtilityParams};

fn money() -> impl Strategy<Value = Money> {
    (0i64..10_000_000_000).prop_map(Money::from_cents)
}

fn fractions() -> impl Strategy<Value = Fractions> {
    (1i64..=1000).prop_flat_map(|den| (Just(den), 0..=den)).prop_flat_map(|(den, a)| (Just(den), Just(a), 0..=den - a)).prop_map(
        |(den, a, b)| Fractions::new(Fraction::new(a, den), Fraction::new(b, den), Fraction::new(den - a - b, den)).unwrap(),
    )
}

fn params() -> impl Strategy<Value = UtilityParams> {
    (0.05f64..1.0, 0.05f64..1.0, 0.05f64..1.0).prop_map(|(a, b, c)| {
        let s = a + b + c;
        UtilityParams::new(a / s, b / s, 1.0 - a / s - b / s).unwrap()
    })
}

proptest! {
    #[test]
    fn allocations_balance(income in money(), f in fractions()) {
        let a = make_allocation(income, &f).unwrap();
        prop_assert_eq!(a.debt() + a.savings() + a.expenses(), income);
        prop_assert!(a.components().iter().all(|c| !c.is_negative()));
    }

    #[test]
    fn thirds_spread_at_most_one_cent(income in money()) {
        let a = rule_allocation(&AllocationRule::one_third(), income).unwrap();
        let c = a.components().map(|m| m.cents());
        let spread = c.iter().max().unwrap() - c.iter().min().unwrap();
        prop_assert!(spread <= 1);
    }

    #[test]
    fn thirds_ser_is_one_up_to_a_cent(income in 3i64..10_000_000_000) {
        let a = rule_allocation(&AllocationRule::one_third(), Money::from_cents(income)).unwrap();
        let r = ser(a.savings(), a.expenses()).unwrap();
        if income % 3 == 0 {
            prop_assert_eq!(r, 1.0);
        } else {
            prop_assert!((r - 1.0).abs() <= 1.0 / a.expenses().cents() as f64 + 1e-15);
        }
    }

    #[test]
    fn classification_is_monotone(a in money(), b in money(), median in 1i64..10_000_000_000) {
        let median = Money::from_cents(median);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(classify_income(lo, median).unwrap() <= classify_income(hi, median).unwrap());
    }

    #[test]
    fn utility_is_homogeneous(p in params(), x in prop::array::uniform3(1.0f64..1e6), lambda in 0.0f64..100.0) {
        let u = utility_at(&p, x);
        let scaled = utility_at(&p, x.map(|v| v * lambda));
        prop_assert!((scaled - lambda * u).abs() <= 1e-9 * (lambda * u).max(1e-300));
    }

    #[test]
    fn own_second_partials_are_negative(p in params(), x in prop::array::uniform3(1.0f64..1e6)) {
        let h = hessian_at(&p, x).unwrap();
        for k in 0..3 {
            prop_assert!(h[k][k] < 0.0);
        }
    }

    #[test]
    fn probability_is_bounded(dti in -10.0f64..10.0, s in -10.0f64..10.0, si in 0.0f64..2.0, sm in 0.0f64..2.0) {
        let p = bankruptcy_probability(&RiskParams::default(), dti, s, si, sm);
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn adjusted_allocations_balance(
        income in money(),
        f in prop::array::uniform3(-0.3f64..0.3),
        rescale in any::<bool>(),
    ) {
        let factors = AdjustmentFactors::new(f[0], f[1], f[2]);
        let mode = if rescale { ProjectionMode::ProportionalRescale } else { ProjectionMode::ResidualExpenses };
        if let Ok(a) = adjusted_allocation(income, &factors, mode) {
            prop_assert_eq!(a.components().iter().copied().sum::<Money>(), income);
        }
    }

    #[test]
    fn savings_factor_grows_with_volatility(si in 0.0f64..0.5, sm in 0.0f64..0.5, di in 0.0f64..0.1, dm in 0.0f64..0.1) {
        let rp = RiskParams::default();
        let base = adjustment_factors(&rp, si, sm).unwrap().alpha_s;
        prop_assert!(adjustment_factors(&rp, si + di, sm).unwrap().alpha_s >= base);
        prop_assert!(adjustment_factors(&rp, si, sm + dm).unwrap().alpha_s >= base);
    }

    #[test]
    fn projection_modes_agree_without_defect(d in 0.0f64..0.2, e in 0.0f64..0.1, income in money()) {
        // α_S = α_D + α_E makes the defect exactly zero in binary when the sum is exact.
        let s = d + e;
        let f = AdjustmentFactors::new(d, s, e);
        prop_assume!(zero_sum_defect(&f) == 0.0);
        let a = adjusted_shares(&f, ProjectionMode::ResidualExpenses).unwrap();
        let b = adjusted_shares(&f, ProjectionMode::ProportionalRescale).unwrap();
        prop_assert_eq!(a[0], b[0]);
        prop_assert_eq!(a[1], b[1]);
        let x = adjusted_allocation(income, &f, ProjectionMode::ResidualExpenses).unwrap();
        let y = adjusted_allocation(income, &f, ProjectionMode::ProportionalRescale).unwrap();
        prop_assert_eq!(x, y);
    }

    #[test]
    fn nested_levels_balance(incomes in prop::collection::vec(money(), 1..8)) {
        let n = nested_multigen_allocation(&incomes).unwrap();
        for (m, income) in n.members.iter().zip(&incomes) {
            prop_assert_eq!(m.components().iter().copied().sum::<Money>(), *income);
        }
        let pool: Money = n.contributions().iter().copied().sum();
        prop_assert_eq!(n.collective.components().iter().copied().sum::<Money>(), pool);
    }
}

fn game() -> impl Strategy<Value = CoalitionGameSpec> {
    (1usize..=6).prop_flat_map(|n| {
        (
            prop::collection::vec(0i64..10_000_000, n),
            prop::collection::vec(0i64..1_000_000, n),
            prop::collection::vec(0i64..1_000_000, n),
        )
            .prop_map(|(i, t, c)| {
                let m = |v: Vec<i64>| v.into_iter().map(Money::from_cents).collect::<Vec<_>>();
                CoalitionGameSpec::additive(m(i)).with_scale_benefit(m(t)).with_coordination_cost(m(c))
            })
    })
}

proptest! {
    #[test]
    fn shapley_is_efficient(spec in game()) {
        let r = shapley_values(&spec).unwrap();
        let all: Vec<usize> = (0..spec.len()).collect();
        let grand = coalition_value(&spec, &all).unwrap();
        prop_assert_eq!(r.values.iter().copied().sum::<Money>(), grand);
        prop_assert_eq!(r.numerators.iter().sum::<i128>(), grand.cents() as i128 * r.denominator);
        for i in 0..spec.len() {
            prop_assert!((r.values[i].cents() as i128 - r.rounded_cents(i)).abs() <= 1);
        }
    }

    #[test]
    fn shapley_treats_twins_equally(mut spec in game(), j in 0usize..6) {
        prop_assume!(spec.len() >= 2);
        let j = 1 + j % (spec.len() - 1);
        spec.member_incomes[j] = spec.member_incomes[0];
        let r = shapley_values(&spec).unwrap();
        prop_assert_eq!(r.numerators[0], r.numerators[j]);
    }

    #[test]
    fn zero_income_is_a_dummy_in_additive_games(mut incomes in prop::collection::vec(0i64..10_000_000, 1..7)) {
        incomes.push(0);
        let spec = CoalitionGameSpec::additive(incomes.into_iter().map(Money::from_cents).collect());
        let r = shapley_values(&spec).unwrap();
        prop_assert_eq!(*r.numerators.last().unwrap(), 0);
    }

    #[test]
    fn coalition_value_grows_with_members(
        incomes in prop::collection::vec(100_000i64..10_000_000, 2..7),
        theta_steps in prop::collection::vec(0i64..1_000_000, 6),
        cost_steps in prop::collection::vec(0i64..100_000, 6),
        mask in 1u32..64,
        extra in 0usize..6,
    ) {
        let n = incomes.len();
        let cumulative = |steps: &[i64]| steps[..n].iter().scan(0, |acc, s| { *acc += s; Some(Money::from_cents(*acc)) }).collect::<Vec<_>>();
        let spec = CoalitionGameSpec::additive(incomes.iter().copied().map(Money::from_cents).collect())
            .with_scale_benefit(cumulative(&theta_steps))
            .with_coordination_cost(cumulative(&cost_steps));
        let members: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let extra = extra % n;
        prop_assume!(!members.is_empty() && !members.contains(&extra));
        let mut bigger = members.clone();
        bigger.push(extra);
        prop_assert!(coalition_value(&spec, &bigger).unwrap() >= coalition_value(&spec, &members).unwrap());
    }
}

#[test]
fn penalty_ratio_converges_linearly() {
    let p = UtilityParams::symmetric();
    for income in [3.0, 300.0, 60000.0] {
        let k = deviation_curvature(&p, income).unwrap();
        let gap = |d: f64| (deviation_utility_loss(&p, income, d).unwrap() / (d * d) - k).abs();
        let d_max = 1e-2 * income;
        let c = 2.0 * gap(d_max) / d_max;
        // ΔU is a difference of two values near U*; its roundoff is about ε·U*.
        let u = utility_at(&p, [income / 3.0; 3]);
        let noise = |d: f64| 8.0 * f64::EPSILON * u / (d * d);
        let mut prev = f64::INFINITY;
        for i in 0..=20 {
            let d = d_max * 10f64.powf(-2.0 * i as f64 / 20.0);
            let g = gap(d);
            assert!(g <= c * d + noise(d), "income {income}, d {d}: gap {g}");
            assert!(g <= prev + noise(d), "ratio not monotone at d {d}");
            prev = g;
        }
    }
}

#[test]
fn income_mean_tracks_drift_at_each_year() {
    let (i0, mu) = (Money::units(50000), 0.03);
    let cfg = PathConfig { horizon_years: 5.0, dt_years: 1.0 / 12.0, trials: 20_000, master_seed: 99 };
    let paths = map_trials(cfg.master_seed, cfg.trials, 0, |_, rng| simulate_income_path(i0, mu, 0.15, &cfg, rng).unwrap());
    for year in 1..=5 {
        let k = year * 12;
        let xs: Vec<f64> = paths.iter().map(|p| p.values[k].to_f64()).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let expected = i0.to_f64() * (1.0 + mu * year as f64);
        assert!((mean - expected).abs() <= 3.0 * sd / n.sqrt(), "year {year}: {mean} vs {expected}");
    }
}

#[test]
fn paths_are_finite_and_thread_independent() {
    let cfg = PathConfig { horizon_years: 3.0, dt_years: 1.0 / 52.0, trials: 300, master_seed: 5 };
    let run = |threads| {
        map_trials(cfg.master_seed, cfg.trials, threads, |_, rng| {
            let i = simulate_income_path(Money::units(40000), 0.02, 0.4, &cfg, rng).unwrap();
            let s = simulate_savings_path(Money::units(100), Money::units(50), 0.04, 0.5, &cfg, rng, None).unwrap();
            (i.values, s.values)
        })
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert!(one.iter().all(|(i, s)| i.iter().chain(s).all(|m| !m.is_negative())));
}

fn profile(income: i64, debt: i64, apr: f64, expenses: i64, sigma: f64) -> HouseholdProfile {
    HouseholdProfile {
        id: "p".into(),
        household_type: HouseholdType::SingleIncome,
        member_incomes: vec![Money::units(income)],
        debt_balance: Money::units(debt),
        debt_apr: apr,
        baseline_expenses: Money::units(expenses),
        sigma_income: sigma,
        sigma_market: sigma,
        rho: 0.3,
        mu: 0.02,
        r_savings: 0.04,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_month_balances(
        income in 10_000i64..200_000,
        debt in 0i64..300_000,
        apr in 0.0f64..0.3,
        expenses in 0i64..150_000,
        sigma in 0.0f64..0.4,
        shock in -0.5f64..0.2,
        inflation in 0.0f64..0.5,
        multiplier in 0.5f64..3.0,
        rule in 0usize..3,
        seed in any::<u64>(),
    ) {
        let rule = [AllocationRule::one_third(), AllocationRule::fifty_thirty_twenty(), AllocationRule::seventy_twenty_ten()][rule].clone();
        let scenario = ScenarioSpec {
            name: "s".into(),
            income_shock: shock,
            apr_multiplier: multiplier,
            inflation_annual: inflation,
            onset_month: 3,
            duration_months: 12,
        };
        let p = profile(income, debt, apr, expenses, sigma);
        let o = run_trial(&p, &rule, &scenario, 60, &mut derive_trial_rng(seed, 0)).unwrap();
        prop_assert!(o.flows.iter().all(|f| f.imbalance() == Money::ZERO));
        prop_assert_eq!(o.defaulted, o.default_month.is_some());
        prop_assert!(o.final_savings >= Money::ZERO);
    }
}

#[test]
fn monotone_harm_over_shock_grid() {
    let cfg = PathConfig { horizon_years: 5.0, dt_years: 1.0 / 12.0, trials: 400, master_seed: 3 };
    let profiles = [profile(50000, 70000, 0.15, 18000, 0.15), profile(80000, 20000, 0.2, 40000, 0.1)];
    let rules = [AllocationRule::one_third(), AllocationRule::fifty_thirty_twenty(), AllocationRule::seventy_twenty_ten()];
    let scenarios: Vec<_> = [0.0, -0.1, -0.25].iter().map(|&s| ScenarioSpec::income_drop(&format!("{s}"), s)).collect();
    let results = run_stress(&profiles, &rules, &scenarios, &cfg, &StressOptions::default()).unwrap();
    for combo in results.chunks(3) {
        let rates: Vec<f64> = combo.iter().map(|r| r.metrics.default_rate).collect();
        assert!(rates.windows(2).all(|w| w[0] <= w[1]), "{} / {}: {rates:?}", combo[0].profile_id, combo[0].rule);
    }
}

#[test]
fn stress_is_thread_independent() {
    let cfg = PathConfig { horizon_years: 3.0, dt_years: 1.0 / 12.0, trials: 300, master_seed: 21 };
    let profiles = [profile(45000, 50000, 0.18, 16000, 0.2)];
    let rules = [AllocationRule::one_third(), AllocationRule::fifty_thirty_twenty()];
    let scenarios = [ScenarioSpec::baseline(), ScenarioSpec::income_drop("drop", -0.15)];
    let run = |threads| run_stress(&profiles, &rules, &scenarios, &cfg, &StressOptions { threads, ..Default::default() }).unwrap();
    assert_eq!(run(1), run(8));
}
