//! Dynamic two-sided matching markets with random utilities: closed-form
//! asymptotics, fluid limits and a Monte Carlo simulator.

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod error;
pub mod fluid;
pub mod quad;
pub mod roots;
pub mod sim;
pub mod specfun;
pub mod utility;

pub use error::{Error, Result};
pub use analytics::{MarketParams, ThresholdSolution};
pub use sim::{ExperimentSummary, Policy, ReplicationResult, SimConfig};
pub use utility::{Family, UtilityModel};
