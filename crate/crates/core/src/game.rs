//! Household coalitions: characteristic function, superadditivity, exact
//! Shapley values, the nested multigenerational split and best-response
//! checks for a single agent.

use serde::{Deserialize, Serialize};

use crate::domain::{div_round, make_allocation, Allocation, Fractions, Money};
use crate::error::{Error, Result};
use crate::utility::{utility, utility_at, UtilityParams};

/// Largest household for which superadditivity is checked exhaustively.
pub const MAX_COALITION_MEMBERS: usize = 16;
/// Largest household for exact Shapley enumeration.
pub const MAX_SHAPLEY_MEMBERS: usize = 10;

/// Bitmask over member indices.
pub type Coalition = u32;

/// `v(S) = Σ_{i∈S} I_i + θ(|S|) − c(S)`.
///
/// `scale_benefit[k-1]` and `coordination_cost[k-1]` hold θ(k) and c(k) for
/// coalitions of size `k`. `subset_costs`, when present, replaces the
/// size-based cost with one entry per coalition bitmask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoalitionGameSpec {
    pub member_incomes: Vec<Money>,
    pub scale_benefit: Vec<Money>,
    pub coordination_cost: Vec<Money>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset_costs: Option<Vec<Money>>,
}

impl CoalitionGameSpec {
    /// Additive game: no scale benefits, no coordination costs.
    pub fn additive(member_incomes: Vec<Money>) -> Self {
        let n = member_incomes.len();
        CoalitionGameSpec {
            member_incomes,
            scale_benefit: vec![Money::ZERO; n],
            coordination_cost: vec![Money::ZERO; n],
            subset_costs: None,
        }
    }

    pub fn with_scale_benefit(mut self, table: Vec<Money>) -> Self {
        self.scale_benefit = table;
        self
    }

    pub fn with_coordination_cost(mut self, table: Vec<Money>) -> Self {
        self.coordination_cost = table;
        self
    }

    pub fn with_subset_costs(mut self, costs: Vec<Money>) -> Self {
        self.subset_costs = Some(costs);
        self
    }

    pub fn len(&self) -> usize {
        self.member_incomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_incomes.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(Error::validation("member_incomes", "at least one member is required"));
        }
        if n > MAX_COALITION_MEMBERS {
            return Err(Error::SizeLimit { what: "coalition game", n, max: MAX_COALITION_MEMBERS });
        }
        if self.scale_benefit.len() != n {
            return Err(Error::validation("scale_benefit", format!("expected {n} entries, got {}", self.scale_benefit.len())));
        }
        if self.coordination_cost.len() != n {
            return Err(Error::validation(
                "coordination_cost",
                format!("expected {n} entries, got {}", self.coordination_cost.len()),
            ));
        }
        if let Some(costs) = &self.subset_costs {
            if costs.len() != 1 << n {
                return Err(Error::validation("subset_costs", format!("expected {} entries, got {}", 1usize << n, costs.len())));
            }
            if costs[0] != Money::ZERO {
                return Err(Error::validation("subset_costs", "the empty coalition must cost 0"));
            }
        }
        Ok(())
    }

    fn full(&self) -> Coalition {
        ((1u64 << self.len()) - 1) as Coalition
    }

    /// Value of a coalition given as a bitmask. Assumes a validated spec.
    fn value_of(&self, s: Coalition) -> Money {
        if s == 0 {
            return Money::ZERO;
        }
        let size = s.count_ones() as usize;
        let incomes: Money = (0..self.len()).filter(|i| s >> i & 1 == 1).map(|i| self.member_incomes[i]).sum();
        let cost = match &self.subset_costs {
            Some(costs) => costs[s as usize],
            None => self.coordination_cost[size - 1],
        };
        incomes + self.scale_benefit[size - 1] - cost
    }

    /// Values of every coalition, indexed by bitmask.
    pub fn value_table(&self) -> Result<Vec<Money>> {
        self.validate()?;
        Ok((0..=self.full()).map(|s| self.value_of(s)).collect())
    }
}

/// Bitmask for a list of member indices.
pub fn coalition_of(spec: &CoalitionGameSpec, members: &[usize]) -> Result<Coalition> {
    let mut mask = 0;
    for &i in members {
        if i >= spec.len() {
            return Err(Error::validation("members", format!("index {i} out of range for {} members", spec.len())));
        }
        mask |= 1 << i;
    }
    Ok(mask)
}

pub fn coalition_value(spec: &CoalitionGameSpec, members: &[usize]) -> Result<Money> {
    spec.validate()?;
    let s = coalition_of(spec, members)?;
    Ok(spec.value_of(s))
}

/// Exhaustive check of `v(S ∪ T) ≥ v(S) + v(T)` over disjoint nonempty pairs.
pub fn is_superadditive(spec: &CoalitionGameSpec) -> Result<bool> {
    Ok(first_superadditivity_violation(spec)?.is_none())
}

/// First disjoint pair `(S, T)` with `v(S ∪ T) < v(S) + v(T)`, if any.
pub fn first_superadditivity_violation(spec: &CoalitionGameSpec) -> Result<Option<(Coalition, Coalition)>> {
    let v = spec.value_table()?;
    let full = spec.full();
    for s in 1..=full {
        let rest = full & !s;
        // Submasks of the complement; each unordered pair is visited twice.
        let mut t = rest;
        while t != 0 {
            if v[(s | t) as usize] < v[s as usize] + v[t as usize] {
                return Ok(Some((s, t)));
            }
            t = (t - 1) & rest;
        }
    }
    Ok(None)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapleyResult {
    /// Payoffs rounded to the cent; they sum exactly to `v(N)`.
    pub values: Vec<Money>,
    /// Exact payoffs in cents are `numerators[i] / denominator`.
    pub numerators: Vec<i128>,
    pub denominator: i128,
}

fn factorials(n: usize) -> Vec<i128> {
    let mut f = vec![1i128; n + 1];
    for k in 1..=n {
        f[k] = f[k - 1] * k as i128;
    }
    f
}

/// `φ_i = Σ_{S ⊆ N∖{i}} |S|!(n−|S|−1)!/n! · [v(S ∪ {i}) − v(S)]`, exact.
pub fn shapley_values(spec: &CoalitionGameSpec) -> Result<ShapleyResult> {
    let n = spec.len();
    if n > MAX_SHAPLEY_MEMBERS {
        return Err(Error::SizeLimit { what: "Shapley enumeration", n, max: MAX_SHAPLEY_MEMBERS });
    }
    let v = spec.value_table()?;
    let fact = factorials(n);
    let full = spec.full();

    let numerators: Vec<i128> = (0..n)
        .map(|i| {
            let bit = 1 << i;
            let others = full & !bit;
            let mut total = 0i128;
            let mut s = others;
            loop {
                let k = s.count_ones() as usize;
                let weight = fact[k] * fact[n - k - 1];
                let marginal = (v[(s | bit) as usize] - v[s as usize]).cents() as i128;
                total += weight * marginal;
                if s == 0 {
                    break;
                }
                s = (s - 1) & others;
            }
            total
        })
        .collect();

    let denominator = fact[n];
    let grand = v[full as usize];
    let values = largest_remainder(&numerators, denominator, grand);
    Ok(ShapleyResult { values, numerators, denominator })
}

/// Rounds `numerators / denominator` cents down, then hands the remaining
/// cents of `target` to the largest remainders (lower index wins ties).
fn largest_remainder(numerators: &[i128], denominator: i128, target: Money) -> Vec<Money> {
    let floors: Vec<i128> = numerators.iter().map(|x| x.div_euclid(denominator)).collect();
    let mut leftover = target.cents() as i128 - floors.iter().sum::<i128>();
    let mut order: Vec<usize> = (0..numerators.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = numerators[a].rem_euclid(denominator);
        let rb = numerators[b].rem_euclid(denominator);
        rb.cmp(&ra).then(a.cmp(&b))
    });
    let mut cents = floors;
    let mut k = 0;
    while leftover > 0 && !order.is_empty() {
        cents[order[k % order.len()]] += 1;
        leftover -= 1;
        k += 1;
    }
    cents.into_iter().map(|c| Money::from_cents(c as i64)).collect()
}

impl ShapleyResult {
    /// Exact payoff in currency units, for reporting.
    pub fn exact_units(&self, i: usize) -> f64 {
        self.numerators[i] as f64 / self.denominator as f64 / 100.0
    }

    /// Exact payoff in cents rounded half away from zero.
    pub fn rounded_cents(&self, i: usize) -> i128 {
        div_round(self.numerators[i], self.denominator)
    }
}

/// Per-member thirds plus a collective split of the pooled expense shares.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NestedAllocation {
    pub members: Vec<Allocation>,
    pub collective: Allocation,
}

impl NestedAllocation {
    /// Pooled contributions, one per member.
    pub fn contributions(&self) -> Vec<Money> {
        self.members.iter().map(Allocation::expenses).collect()
    }
}

/// Each member splits their income in thirds and contributes the expense
/// third to a pool, which is split in thirds again.
pub fn nested_multigen_allocation(member_incomes: &[Money]) -> Result<NestedAllocation> {
    if member_incomes.is_empty() {
        return Err(Error::validation("member_incomes", "at least one member is required"));
    }
    let thirds = Fractions::thirds();
    let members = member_incomes.iter().map(|&i| make_allocation(i, &thirds)).collect::<Result<Vec<_>>>()?;
    let pool: Money = members.iter().map(Allocation::expenses).sum();
    let collective = make_allocation(pool, &thirds)?;
    Ok(NestedAllocation { members, collective })
}

/// Relative slack granted to the candidate in [`best_response_check`].
pub const BEST_RESPONSE_SLACK: f64 = 1e-9;

/// True when no point of the budget grid with spacing `resolution` beats the
/// candidate's utility by more than [`BEST_RESPONSE_SLACK`] (relative).
pub fn best_response_check(params: &UtilityParams, income: Money, candidate: &Allocation, resolution: Money) -> Result<bool> {
    if resolution.cents() <= 0 {
        return Err(Error::validation("resolution", "must be positive"));
    }
    if candidate.income() != income {
        return Err(Error::validation("candidate", format!("allocates {} of an income of {income}", candidate.income())));
    }
    if income.cents() == 0 {
        return Ok(true);
    }
    let threshold = utility(params, candidate) * (1.0 + BEST_RESPONSE_SLACK);
    let step = resolution.cents();
    let total = income.cents();
    let m = total / step;
    for i in 0..=m {
        for j in 0..=(m - i) {
            let d = (i * step) as f64 / 100.0;
            let s = (j * step) as f64 / 100.0;
            let e = (total - (i + j) * step) as f64 / 100.0;
            if utility_at(params, [d, s, e]) > threshold {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
