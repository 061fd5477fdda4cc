//! Command-line front end: experiment files, subcommands and CSV output.

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod error;
pub mod spec;

pub use error::CliError;
pub use spec::ExperimentSpec;
