//! Finite-horizon allocation planning by backward induction.
//!
//! State is `(income, debt_balance, savings_balance)` on a tensor grid.
//! One period under action fractions `(d, s, e)`:
//!
//! ```text
//! debt'    = max(0, debt·(1 + r_d) − d·income)
//! savings' = savings·(1 + r_s) + s·income
//! income'  = max(0, income·(1 + μ + σ_ω·ω)),   ω ~ N(0, 1)
//! ```
//!
//! The reward is `U(d·I, s·I, e·I) + w·ln(1 + savings) − w·ln(1 + debt)`
//! with `w = state_utility_weight`. `E[V_{t+1}]` uses a Gauss–Hermite rule
//! over `ω` and multilinear interpolation between grid nodes, clamped at
//! the grid edges. Actions are the simplex points with denominator
//! `action_divisions`; exact ties go to the action nearest `(⅓, ⅓, ⅓)` in L1.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Allocation, Fraction, Money};
use crate::error::{Error, Result};
use crate::quadrature::standard_normal_rule;
use crate::utility::{utility_at, UtilityParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HouseholdState {
    pub income: Money,
    pub debt_balance: Money,
    pub savings_balance: Money,
}

impl HouseholdState {
    pub fn new(income: Money, debt_balance: Money, savings_balance: Money) -> Result<Self> {
        for (name, v) in [("income", income), ("debt_balance", debt_balance), ("savings_balance", savings_balance)] {
            if v.is_negative() {
                return Err(Error::validation(name, "must be nonnegative"));
            }
        }
        Ok(HouseholdState { income, debt_balance, savings_balance })
    }

    pub fn as_f64(&self) -> [f64; 3] {
        [self.income.to_f64(), self.debt_balance.to_f64(), self.savings_balance.to_f64()]
    }
}

/// Sorted breakpoints for each state dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateGrid {
    pub income: Vec<f64>,
    pub debt: Vec<f64>,
    pub savings: Vec<f64>,
}

impl StateGrid {
    /// Income: 11 log-spaced nodes over `[0.25, 4] × income`. Debt and
    /// savings: 11 evenly spaced nodes over `[0, 3] × income`.
    pub fn default_for(initial_income: f64) -> Result<Self> {
        if !(initial_income > 0.0 && initial_income.is_finite()) {
            return Err(Error::validation("income", "default grids need a positive initial income"));
        }
        let n = 11;
        let (lo, hi) = ((0.25 * initial_income).ln(), (4.0 * initial_income).ln());
        let income = (0..n).map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp()).collect();
        let linear = |top: f64| (0..n).map(|i| top * i as f64 / (n - 1) as f64).collect::<Vec<_>>();
        Ok(StateGrid { income, debt: linear(3.0 * initial_income), savings: linear(3.0 * initial_income) })
    }

    fn dims(&self) -> [&[f64]; 3] {
        [&self.income, &self.debt, &self.savings]
    }

    pub fn len(&self) -> usize {
        self.income.len() * self.debt.len() * self.savings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self) -> Result<()> {
        for (name, g) in ["income", "debt", "savings"].iter().zip(self.dims()) {
            if g.is_empty() {
                return Err(Error::validation(format!("state_grid.{name}"), "grid is empty"));
            }
            if g.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::validation(format!("state_grid.{name}"), "nodes must be finite and nonnegative"));
            }
            if g.windows(2).any(|p| p[0] >= p[1]) {
                return Err(Error::validation(format!("state_grid.{name}"), "nodes must be strictly increasing"));
            }
        }
        Ok(())
    }

    fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.debt.len() + j) * self.savings.len() + k
    }

    fn node_coords(&self, node: usize) -> (usize, usize, usize) {
        let ns = self.savings.len();
        let nd = self.debt.len();
        (node / (nd * ns), (node / ns) % nd, node % ns)
    }

    /// State values at a node.
    pub fn node_state(&self, node: usize) -> [f64; 3] {
        let (i, j, k) = self.node_coords(node);
        [self.income[i], self.debt[j], self.savings[k]]
    }

    /// Index of the grid node nearest to `point` in each dimension.
    pub fn nearest_node(&self, point: [f64; 3]) -> usize {
        let nearest = |g: &[f64], x: f64| {
            g.iter()
                .enumerate()
                .min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))
                .map(|(i, _)| i)
                .unwrap_or(0)
        };
        self.node_index(nearest(&self.income, point[0]), nearest(&self.debt, point[1]), nearest(&self.savings, point[2]))
    }

    /// Multilinear interpolation of node `values`, flat beyond the grid.
    pub fn interpolate(&self, values: &[f64], point: [f64; 3]) -> f64 {
        let brackets: [(usize, usize, f64); 3] = {
            let dims = self.dims();
            [bracket(dims[0], point[0]), bracket(dims[1], point[1]), bracket(dims[2], point[2])]
        };
        let mut acc = 0.0;
        for corner in 0..8 {
            let pick = |d: usize| {
                let (lo, hi, t) = brackets[d];
                if corner >> d & 1 == 1 {
                    (hi, t)
                } else {
                    (lo, 1.0 - t)
                }
            };
            let (i, wi) = pick(0);
            let (j, wj) = pick(1);
            let (k, wk) = pick(2);
            let w = wi * wj * wk;
            if w != 0.0 {
                acc += w * values[self.node_index(i, j, k)];
            }
        }
        acc
    }
}

/// Lower index, upper index and weight of the upper node for `x`.
fn bracket(grid: &[f64], x: f64) -> (usize, usize, f64) {
    let n = grid.len();
    if n == 1 || x <= grid[0] {
        return (0, 0, 0.0);
    }
    if x >= grid[n - 1] {
        return (n - 1, n - 1, 0.0);
    }
    let hi = grid.partition_point(|&g| g <= x).min(n - 1);
    let lo = hi - 1;
    (lo, hi, (x - grid[lo]) / (grid[hi] - grid[lo]))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DynamicConfig {
    pub horizon: usize,
    pub discount: f64,
    pub debt_apr: f64,
    pub savings_return: f64,
    pub income_growth: f64,
    pub shock_std: f64,
    pub shock_samples: usize,
    pub state_grid: StateGrid,
    /// Actions are multiples of `1 / action_divisions`.
    pub action_divisions: u32,
    pub utility_params: UtilityParams,
    pub state_utility_weight: f64,
}

impl DynamicConfig {
    /// Defaults around an initial state: 10 periods, β = 0.96, 7 quadrature
    /// nodes, actions in steps of 1/30, state weight 0.1.
    pub fn default_for(initial: &HouseholdState) -> Result<Self> {
        Ok(DynamicConfig {
            horizon: 10,
            discount: 0.96,
            debt_apr: 0.18,
            savings_return: 0.04,
            income_growth: 0.02,
            shock_std: 0.1,
            shock_samples: 7,
            state_grid: StateGrid::default_for(initial.income.to_f64())?,
            action_divisions: 30,
            utility_params: UtilityParams::symmetric(),
            state_utility_weight: 0.1,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::validation("horizon", "must be at least one period"));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::validation("discount", format!("{} is outside (0, 1]", self.discount)));
        }
        for (name, v) in [
            ("debt_apr", self.debt_apr),
            ("savings_return", self.savings_return),
            ("income_growth", self.income_growth),
        ] {
            if !v.is_finite() {
                return Err(Error::validation(name, "must be finite"));
            }
        }
        if !(self.shock_std.is_finite() && self.shock_std >= 0.0) {
            return Err(Error::validation("shock_std", "must be nonnegative"));
        }
        if self.shock_samples == 0 {
            return Err(Error::validation("shock_samples", "must be at least 1"));
        }
        if self.action_divisions == 0 {
            return Err(Error::validation("action_divisions", "must be at least 1"));
        }
        if !(self.state_utility_weight.is_finite() && self.state_utility_weight >= 0.0) {
            return Err(Error::validation("state_utility_weight", "must be nonnegative"));
        }
        self.state_grid.validate()
    }

    /// Action step as a fraction of income.
    pub fn action_step(&self) -> Fraction {
        Fraction::new(1, self.action_divisions as i64)
    }

    fn transition_raw(&self, state: [f64; 3], amounts: [f64; 2], shock: f64) -> [f64; 3] {
        let [income, debt, savings] = state;
        let [d, s] = amounts;
        [
            (income * (1.0 + self.income_growth + self.shock_std * shock)).max(0.0),
            (debt * (1.0 + self.debt_apr) - d).max(0.0),
            savings * (1.0 + self.savings_return) + s,
        ]
    }

    fn state_reward(&self, state: [f64; 3]) -> f64 {
        let w = self.state_utility_weight;
        if w == 0.0 {
            0.0
        } else {
            w * state[2].ln_1p() - w * state[1].ln_1p()
        }
    }
}

/// One period of the household law of motion. `action` must split the
/// state's income.
pub fn transition(state: &HouseholdState, action: &Allocation, shock: f64, cfg: &DynamicConfig) -> Result<HouseholdState> {
    if action.income() != state.income {
        return Err(Error::validation(
            "action",
            format!("allocates {} but the state's income is {}", action.income(), state.income),
        ));
    }
    if !shock.is_finite() {
        return Err(Error::validation("shock", "must be finite"));
    }
    let next = cfg.transition_raw(state.as_f64(), [action.debt().to_f64(), action.savings().to_f64()], shock);
    HouseholdState::new(Money::from_f64(next[0]), Money::from_f64(next[1]), Money::from_f64(next[2]))
}

/// Simplex grid point `(a, b, N − a − b) / N`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub debt: u32,
    pub savings: u32,
}

impl Action {
    pub fn fractions(&self, divisions: u32) -> [Fraction; 3] {
        let n = divisions as i64;
        let (a, b) = (self.debt as i64, self.savings as i64);
        [Fraction::new(a, n), Fraction::new(b, n), Fraction::new(n - a - b, n)]
    }

    pub fn fractions_f64(&self, divisions: u32) -> [f64; 3] {
        let n = divisions as f64;
        let (a, b) = (self.debt as f64, self.savings as f64);
        [a / n, b / n, (divisions - self.debt - self.savings) as f64 / n]
    }

    /// `3N × L1` distance to `(⅓, ⅓, ⅓)`, kept integral for exact ties.
    fn scaled_l1_from_thirds(&self, divisions: u32) -> u64 {
        let n = divisions as i64;
        let parts = [self.debt as i64, self.savings as i64, n - self.debt as i64 - self.savings as i64];
        parts.iter().map(|p| (3 * p - n).unsigned_abs()).sum()
    }
}

fn action_grid(divisions: u32) -> Vec<Action> {
    let mut out = Vec::with_capacity(((divisions + 1) * (divisions + 2) / 2) as usize);
    for debt in 0..=divisions {
        for savings in 0..=(divisions - debt) {
            out.push(Action { debt, savings });
        }
    }
    out
}

/// Optimal actions and values per period and grid node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub grid: StateGrid,
    pub action_divisions: u32,
    /// `actions[t][node]` for periods `t = 0..T`.
    pub actions: Vec<Vec<Action>>,
    /// `values[t][node]`; `values[T]` is the zero terminal value.
    pub values: Vec<Vec<f64>>,
}

impl Policy {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn action(&self, t: usize, node: usize) -> Action {
        self.actions[t][node]
    }

    pub fn fractions(&self, t: usize, node: usize) -> [Fraction; 3] {
        self.actions[t][node].fractions(self.action_divisions)
    }

    /// Largest L1 distance from `(⅓, ⅓, ⅓)` over every period and node.
    pub fn max_l1_from_thirds(&self) -> f64 {
        let third = 1.0 / 3.0;
        self.actions
            .iter()
            .flatten()
            .map(|a| a.fractions_f64(self.action_divisions).iter().map(|f| (f - third).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Value of taking `action` at `node` in period `t`, continuing optimally.
    pub fn bellman_objective(&self, cfg: &DynamicConfig, t: usize, node: usize, action: Action) -> Result<f64> {
        let ctx = Context::new(cfg)?;
        Ok(ctx.objective(&self.grid.node_state(node), action, &self.values[t + 1], t + 1 == self.horizon()))
    }
}

struct Context<'a> {
    cfg: &'a DynamicConfig,
    actions: Vec<Action>,
    action_utility: Vec<f64>,
    shocks: Vec<f64>,
    weights: Vec<f64>,
}

impl<'a> Context<'a> {
    fn new(cfg: &'a DynamicConfig) -> Result<Self> {
        cfg.validate()?;
        let actions = action_grid(cfg.action_divisions);
        // U is homogeneous of degree one: U(f·I) = I·U(f).
        let action_utility = actions.iter().map(|a| utility_at(&cfg.utility_params, a.fractions_f64(cfg.action_divisions))).collect();
        let (shocks, weights) = if cfg.shock_std == 0.0 { (vec![0.0], vec![1.0]) } else { standard_normal_rule(cfg.shock_samples)? };
        Ok(Context { cfg, actions, action_utility, shocks, weights })
    }

    fn objective_at(&self, state: &[f64; 3], idx: usize, next_values: &[f64], terminal: bool) -> f64 {
        let action = self.actions[idx];
        let f = action.fractions_f64(self.cfg.action_divisions);
        let income = state[0];
        let reward = income * self.action_utility[idx] + self.cfg.state_reward(*state);
        if terminal {
            return reward;
        }
        let amounts = [f[0] * income, f[1] * income];
        let expected: f64 = self
            .shocks
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * self.cfg.state_grid.interpolate(next_values, self.cfg.transition_raw(*state, amounts, z)))
            .sum();
        reward + self.cfg.discount * expected
    }

    fn objective(&self, state: &[f64; 3], action: Action, next_values: &[f64], terminal: bool) -> f64 {
        let idx = self.actions.iter().position(|a| *a == action).expect("action on the grid");
        self.objective_at(state, idx, next_values, terminal)
    }

    fn best_action(&self, state: &[f64; 3], next_values: &[f64], terminal: bool) -> (Action, f64) {
        let divisions = self.cfg.action_divisions;
        let mut best = (self.actions[0], f64::NEG_INFINITY);
        for idx in 0..self.actions.len() {
            let value = self.objective_at(state, idx, next_values, terminal);
            let tol = 1e-12 * value.abs().max(1.0);
            let candidate = self.actions[idx];
            let better = value > best.1 + tol
                || ((value - best.1).abs() <= tol
                    && candidate.scaled_l1_from_thirds(divisions) < best.0.scaled_l1_from_thirds(divisions));
            if better {
                best = (candidate, value);
            }
        }
        best
    }
}

/// Backward induction from period `T − 1` down to `0`. The initial state
/// must lie inside the grid.
pub fn solve_plan(initial: &HouseholdState, cfg: &DynamicConfig) -> Result<Policy> {
    let ctx = Context::new(cfg)?;
    let grid = &cfg.state_grid;
    let point = initial.as_f64();
    for ((name, axis), x) in [("income", &grid.income), ("debt_balance", &grid.debt), ("savings_balance", &grid.savings)].into_iter().zip(point) {
        let (lo, hi) = (axis[0], axis[axis.len() - 1]);
        if !(lo..=hi).contains(&x) {
            return Err(Error::validation(name, format!("initial value {x} lies outside the grid [{lo}, {hi}]")));
        }
    }
    let nodes = grid.len();
    let horizon = cfg.horizon;
    let mut values = vec![vec![0.0; nodes]; horizon + 1];
    let mut actions = vec![Vec::new(); horizon];
    for t in (0..horizon).rev() {
        let terminal = t + 1 == horizon;
        let next = &values[t + 1];
        let solved: Vec<(Action, f64)> =
            (0..nodes).into_par_iter().map(|node| ctx.best_action(&grid.node_state(node), next, terminal)).collect();
        actions[t] = solved.iter().map(|s| s.0).collect();
        values[t] = solved.iter().map(|s| s.1).collect();
    }
    Ok(Policy { grid: grid.clone(), action_divisions: cfg.action_divisions, actions, values })
}

/// `(⅓ − d, s − ⅓, ⅓ − e)` at the node nearest `state`. The signed sum
/// `−α_D + α_S − α_E` is exactly zero.
pub fn policy_adjustments(p: &Policy, t: usize, state: &HouseholdState) -> Result<[Fraction; 3]> {
    if t >= p.horizon() {
        return Err(Error::validation("t", format!("period {t} is outside the horizon of {}", p.horizon())));
    }
    let node = p.grid.nearest_node(state.as_f64());
    Ok(adjustments_from_fractions(p.fractions(t, node)))
}

pub fn adjustments_from_fractions(f: [Fraction; 3]) -> [Fraction; 3] {
    let third = Fraction::new(1, 3);
    [third - f[0], f[1] - third, third - f[2]]
}
