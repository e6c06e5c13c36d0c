//! Config-driven experiment runner for `qpspec-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod plot;
pub mod run;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use run::{run, RunOptions, RunReport};
