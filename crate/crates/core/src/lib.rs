//! Budget allocation analysis around the one-third rule: fixed-point
//! allocations, Cobb-Douglas utility, probit risk, stochastic income and
//! savings paths, volatility adjustments, household coalition games,
//! dynamic planning and Monte Carlo stress tests.

pub mod adjust;
pub mod domain;
pub mod dynamic;
pub mod error;
pub mod game;
pub mod io;
pub mod quadrature;
pub mod risk;
pub mod stochastic;
pub mod stress;
pub mod utility;

pub use domain::{Allocation, AllocationRule, Fraction, Fractions, HouseholdProfile, Money, RuleId};
pub use error::{Error, Result};
