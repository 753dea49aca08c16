//! Core value types: fixed-point money, allocations, allocation rules,
//! budget ratios and household classification.
//!
//! Money is held as a signed 64-bit count of cents. Every [`Allocation`]
//! satisfies `debt + savings + expenses == income` exactly; fractional
//! splits round to the nearest cent and the residual lands in expenses.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact rational used for rule fractions.
pub type Fraction = Ratio<i64>;

/// A currency-agnostic amount in cents.
///
/// Values built through [`Money::new`] or parsing are nonnegative; the type
/// itself is signed so cash-flow deltas can use the [`SignedMoney`] alias.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Money(i64);

/// Signed cash-flow delta. Same representation as [`Money`].
pub type SignedMoney = Money;

impl Money {
    pub const ZERO: Money = Money(0);

    pub const fn from_cents(cents: i64) -> Self {
        Money(cents)
    }

    /// Whole currency units.
    pub const fn units(units: i64) -> Self {
        Money(units * 100)
    }

    /// Nonnegative amount from currency units, rounded to the nearest cent.
    pub fn new(units: f64) -> Result<Self> {
        if !units.is_finite() || units < 0.0 {
            return Err(Error::validation("amount", format!("{units} is not a nonnegative finite amount")));
        }
        Ok(Money::from_f64(units))
    }

    /// Rounds a (possibly negative) amount in currency units to the nearest cent.
    pub fn from_f64(units: f64) -> Self {
        Money((units * 100.0).round() as i64)
    }

    pub const fn cents(self) -> i64 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }

    pub const fn is_negative(self) -> bool {
        self.0 < 0
    }

    pub fn abs(self) -> Self {
        Money(self.0.abs())
    }

    pub fn max(self, other: Money) -> Money {
        Money(self.0.max(other.0))
    }

    pub fn min(self, other: Money) -> Money {
        Money(self.0.min(other.0))
    }

    /// `self × r`, rounded half away from zero to the nearest cent.
    pub fn mul_fraction(self, r: Fraction) -> Money {
        let num = self.0 as i128 * *r.numer() as i128;
        let den = *r.denom() as i128;
        Money(div_round(num, den) as i64)
    }
}

/// Integer division rounding half away from zero. `den` must be positive.
pub(crate) fn div_round(num: i128, den: i128) -> i128 {
    debug_assert!(den > 0);
    let q = num.div_euclid(den);
    let r = num.rem_euclid(den);
    // r in [0, den); round up when 2r > den, or on ties for nonnegative num.
    if 2 * r > den || (2 * r == den && num >= 0) {
        q + 1
    } else {
        q
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl Neg for Money {
    type Output = Money;
    fn neg(self) -> Money {
        Money(-self.0)
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl SubAssign for Money {
    fn sub_assign(&mut self, rhs: Money) {
        self.0 -= rhs.0;
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        Money(iter.map(|m| m.0).sum())
    }
}

impl<'a> Sum<&'a Money> for Money {
    fn sum<I: Iterator<Item = &'a Money>>(iter: I) -> Money {
        Money(iter.map(|m| m.0).sum())
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

impl FromStr for Money {
    type Err = Error;

    /// Parses a plain decimal with at most two fractional digits, e.g. `41000` or `13666.67`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::validation("amount", format!("`{s}` is not a decimal amount with at most 2 fractional digits"));
        let t = s.trim();
        let (neg, body) = match t.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, t.strip_prefix('+').unwrap_or(t)),
        };
        let (whole, frac) = body.split_once('.').unwrap_or((body, ""));
        if whole.is_empty() && frac.is_empty() || frac.len() > 2 {
            return Err(bad());
        }
        if !whole.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let whole: i64 = if whole.is_empty() { 0 } else { whole.parse().map_err(|_| bad())? };
        let frac_cents: i64 = match frac.len() {
            0 => 0,
            1 => frac.parse::<i64>().map_err(|_| bad())? * 10,
            _ => frac.parse().map_err(|_| bad())?,
        };
        let cents = whole.checked_mul(100).and_then(|c| c.checked_add(frac_cents)).ok_or_else(bad)?;
        Ok(Money(if neg { -cents } else { cents }))
    }
}

/// A split of one income into debt repayment, savings and living expenses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    debt: Money,
    savings: Money,
    expenses: Money,
    income: Money,
}

impl Allocation {
    /// Builds an allocation whose income is the sum of the three parts.
    pub fn new(debt: Money, savings: Money, expenses: Money) -> Result<Self> {
        for (name, v) in [("debt", debt), ("savings", savings), ("expenses", expenses)] {
            if v.is_negative() {
                return Err(Error::validation(name, format!("component {v} is negative")));
            }
        }
        Ok(Allocation { debt, savings, expenses, income: debt + savings + expenses })
    }

    /// Builds an allocation and checks it against a stated income.
    pub fn with_income(debt: Money, savings: Money, expenses: Money, income: Money) -> Result<Self> {
        let a = Allocation::new(debt, savings, expenses)?;
        if a.income != income {
            return Err(Error::validation(
                "income",
                format!("components sum to {} but income is {income}", a.income),
            ));
        }
        Ok(a)
    }

    pub fn debt(&self) -> Money {
        self.debt
    }

    pub fn savings(&self) -> Money {
        self.savings
    }

    pub fn expenses(&self) -> Money {
        self.expenses
    }

    pub fn income(&self) -> Money {
        self.income
    }

    pub fn components(&self) -> [Money; 3] {
        [self.debt, self.savings, self.expenses]
    }

    /// Components as currency-unit floats, in (debt, savings, expenses) order.
    pub fn as_f64(&self) -> [f64; 3] {
        [self.debt.to_f64(), self.savings.to_f64(), self.expenses.to_f64()]
    }
}

impl fmt::Display for Allocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "debt={} savings={} expenses={}", self.debt, self.savings, self.expenses)
    }
}

/// Nonnegative rational shares in (debt, savings, expenses) order, summing to exactly 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Fractions {
    pub debt: Fraction,
    pub savings: Fraction,
    pub expenses: Fraction,
}

impl Fractions {
    pub fn new(debt: Fraction, savings: Fraction, expenses: Fraction) -> Result<Self> {
        for (name, v) in [("debt", debt), ("savings", savings), ("expenses", expenses)] {
            if v < Fraction::from_integer(0) {
                return Err(Error::validation(format!("fractions.{name}"), format!("{v} is negative")));
            }
        }
        let sum = debt + savings + expenses;
        if sum != Fraction::from_integer(1) {
            return Err(Error::validation("fractions", format!("shares sum to {sum}, not 1")));
        }
        Ok(Fractions { debt, savings, expenses })
    }

    pub fn thirds() -> Self {
        let t = Fraction::new(1, 3);
        Fractions { debt: t, savings: t, expenses: t }
    }

    pub fn as_f64(&self) -> [f64; 3] {
        [self.debt, self.savings, self.expenses].map(|r| *r.numer() as f64 / *r.denom() as f64)
    }

    /// Parses `d,s,e` where each share is a decimal (`0.3`) or a ratio (`1/3`).
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::validation("fractions", format!("expected three comma-separated shares, got `{s}`")));
        }
        Fractions::new(parse_fraction(parts[0])?, parse_fraction(parts[1])?, parse_fraction(parts[2])?)
    }
}

/// Parses an exact rational from `p/q` or a finite decimal string.
pub fn parse_fraction(s: &str) -> Result<Fraction> {
    let bad = || Error::validation("fraction", format!("`{s}` is not a decimal or p/q ratio"));
    let t = s.trim();
    if let Some((p, q)) = t.split_once('/') {
        let p: i64 = p.trim().parse().map_err(|_| bad())?;
        let q: i64 = q.trim().parse().map_err(|_| bad())?;
        if q == 0 {
            return Err(bad());
        }
        return Ok(Fraction::new(p, q));
    }
    let (neg, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t),
    };
    let (whole, frac) = body.split_once('.').unwrap_or((body, ""));
    if (whole.is_empty() && frac.is_empty()) || frac.len() > 12 {
        return Err(bad());
    }
    if !whole.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let den = 10i64.pow(frac.len() as u32);
    let whole: i64 = if whole.is_empty() { 0 } else { whole.parse().map_err(|_| bad())? };
    let frac: i64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
    let num = whole.checked_mul(den).and_then(|w| w.checked_add(frac)).ok_or_else(bad)?;
    Ok(Fraction::new(if neg { -num } else { num }, den))
}

/// Splits `income` by `fractions`: debt and savings round to the nearest cent,
/// expenses take the residual.
pub fn make_allocation(income: Money, fractions: &Fractions) -> Result<Allocation> {
    if income.is_negative() {
        return Err(Error::validation("income", format!("{income} is negative")));
    }
    // Revalidate: the fields are public.
    let f = Fractions::new(fractions.debt, fractions.savings, fractions.expenses)?;
    let debt = income.mul_fraction(f.debt);
    let mut savings = income.mul_fraction(f.savings);
    let mut expenses = income - debt - savings;
    if expenses.is_negative() {
        // Both rounded up with a zero expense share; give the cent back.
        savings += expenses;
        expenses = Money::ZERO;
    }
    Allocation::with_income(debt, savings, expenses, income)
}

/// Named budgeting rules.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleId {
    OneThird,
    FiftyThirtyTwenty,
    SeventyTwentyTen,
    Custom,
}

impl RuleId {
    pub fn as_str(&self) -> &'static str {
        match self {
            RuleId::OneThird => "one_third",
            RuleId::FiftyThirtyTwenty => "fifty_thirty_twenty",
            RuleId::SeventyTwentyTen => "seventy_twenty_ten",
            RuleId::Custom => "custom",
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RuleId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "one_third" => Ok(RuleId::OneThird),
            "fifty_thirty_twenty" => Ok(RuleId::FiftyThirtyTwenty),
            "seventy_twenty_ten" => Ok(RuleId::SeventyTwentyTen),
            "custom" => Ok(RuleId::Custom),
            other => Err(Error::validation("rule", format!("unknown rule `{other}`"))),
        }
    }
}

/// A rule id together with its (debt, savings, expenses) shares.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AllocationRule {
    pub id: RuleId,
    pub fractions: Fractions,
}

impl AllocationRule {
    pub fn new(id: RuleId, fractions: Fractions) -> Self {
        AllocationRule { id, fractions }
    }

    pub fn one_third() -> Self {
        AllocationRule { id: RuleId::OneThird, fractions: Fractions::thirds() }
    }

    /// 50/30/20 with the 20% savings-and-debt bucket split evenly: needs and
    /// wants (80%) both count as expenses.
    pub fn fifty_thirty_twenty() -> Self {
        Self::fifty_thirty_twenty_split(Fraction::new(1, 2)).expect("even split is valid")
    }

    /// 50/30/20 where `debt_share` of the 20% bucket goes to debt and the rest to savings.
    pub fn fifty_thirty_twenty_split(debt_share: Fraction) -> Result<Self> {
        if debt_share < Fraction::from_integer(0) || debt_share > Fraction::from_integer(1) {
            return Err(Error::validation("debt_share", format!("{debt_share} is outside [0, 1]")));
        }
        let bucket = Fraction::new(1, 5);
        let fractions = Fractions::new(bucket * debt_share, bucket * (Fraction::from_integer(1) - debt_share), Fraction::new(4, 5))?;
        Ok(AllocationRule { id: RuleId::FiftyThirtyTwenty, fractions })
    }

    /// 70% living expenses, 20% savings, 10% debt.
    pub fn seventy_twenty_ten() -> Self {
        AllocationRule {
            id: RuleId::SeventyTwentyTen,
            fractions: Fractions { debt: Fraction::new(1, 10), savings: Fraction::new(1, 5), expenses: Fraction::new(7, 10) },
        }
    }

    /// The default rule for an id. `custom` has no default.
    pub fn preset(id: RuleId) -> Result<Self> {
        match id {
            RuleId::OneThird => Ok(Self::one_third()),
            RuleId::FiftyThirtyTwenty => Ok(Self::fifty_thirty_twenty()),
            RuleId::SeventyTwentyTen => Ok(Self::seventy_twenty_ten()),
            RuleId::Custom => Err(Error::validation("rule", "custom rules need explicit fractions")),
        }
    }
}

pub fn rule_allocation(rule: &AllocationRule, income: Money) -> Result<Allocation> {
    make_allocation(income, &rule.fractions)
}

/// Debt-to-income ratio.
pub fn dti(debt_payment: Money, income: Money) -> Result<f64> {
    if income.cents() <= 0 {
        return Err(Error::domain("dti", "income must be positive"));
    }
    Ok(debt_payment.cents() as f64 / income.cents() as f64)
}

/// Savings-to-expense ratio.
pub fn ser(savings: Money, expenses: Money) -> Result<f64> {
    if expenses.cents() <= 0 {
        return Err(Error::domain("ser", "expenses must be positive"));
    }
    Ok(savings.cents() as f64 / expenses.cents() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncomeClass {
    Low,
    Middle,
    High,
}

/// Low below 30% of the regional median, middle in the inclusive band
/// [30%, 80%], high above it. Compared exactly in cents.
pub fn classify_income(income: Money, regional_median: Money) -> Result<IncomeClass> {
    if regional_median.cents() <= 0 {
        return Err(Error::validation("regional_median", "must be positive"));
    }
    let scaled = income.cents() as i128 * 100;
    let median = regional_median.cents() as i128;
    Ok(if scaled < 30 * median {
        IncomeClass::Low
    } else if scaled <= 80 * median {
        IncomeClass::Middle
    } else {
        IncomeClass::High
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HouseholdType {
    SingleIncome,
    DualIncome,
    Multigenerational,
}

impl HouseholdType {
    pub fn as_str(&self) -> &'static str {
        match self {
            HouseholdType::SingleIncome => "single_income",
            HouseholdType::DualIncome => "dual_income",
            HouseholdType::Multigenerational => "multigenerational",
        }
    }
}

impl FromStr for HouseholdType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "single_income" => Ok(HouseholdType::SingleIncome),
            "dual_income" => Ok(HouseholdType::DualIncome),
            "multigenerational" => Ok(HouseholdType::Multigenerational),
            other => Err(Error::validation("household_type", format!("unknown household type `{other}`"))),
        }
    }
}

/// A household's income, debt stock, expenses and volatility parameters.
///
/// `debt_balance` is a stock; allocation components are annual flows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HouseholdProfile {
    pub id: String,
    pub household_type: HouseholdType,
    pub member_incomes: Vec<Money>,
    pub debt_balance: Money,
    pub debt_apr: f64,
    pub baseline_expenses: Money,
    pub sigma_income: f64,
    pub sigma_market: f64,
    pub rho: f64,
    pub mu: f64,
    pub r_savings: f64,
}

impl HouseholdProfile {
    /// Total annual household income.
    pub fn income(&self) -> Money {
        self.member_incomes.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::validation("id", "must not be empty"));
        }
        if self.member_incomes.is_empty() {
            return Err(Error::validation("income_annual", "at least one member income is required"));
        }
        if self.member_incomes.iter().any(|m| m.is_negative()) {
            return Err(Error::validation("income_annual", "member incomes must be nonnegative"));
        }
        if self.debt_balance.is_negative() {
            return Err(Error::validation("debt_balance", "must be nonnegative"));
        }
        if self.baseline_expenses.is_negative() {
            return Err(Error::validation("baseline_expenses_annual", "must be nonnegative"));
        }
        for (name, v) in [
            ("debt_apr", self.debt_apr),
            ("sigma_income", self.sigma_income),
            ("sigma_market", self.sigma_market),
            ("rho", self.rho),
            ("mu", self.mu),
            ("r_savings", self.r_savings),
        ] {
            if !v.is_finite() {
                return Err(Error::validation(name, format!("{v} is not finite")));
            }
        }
        if self.rho.abs() > 1.0 {
            return Err(Error::validation("rho", format!("{} is outside [-1, 1]", self.rho)));
        }
        if self.sigma_income < 0.0 {
            return Err(Error::validation("sigma_income", "must be nonnegative"));
        }
        if self.sigma_market < 0.0 {
            return Err(Error::validation("sigma_market", "must be nonnegative"));
        }
        Ok(())
    }
}
