//! Configuration, experiments and reporting for the `nlkpp` command-line
//! driver.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod checks;
pub mod commands;
pub mod config;
pub mod report;

pub use commands::{cmd_converge, cmd_hbar, cmd_metric, cmd_simulate, cmd_validate, cmd_vi};
pub use config::{ConfigError, ExperimentConfig};
pub use report::{Check, RunReport};
