//! Experiment driver: config loading, grid execution, verification suites
//! and the partition tool behind the `dvrp` binary.

// `!(x > 0.0)` style guards are kept on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod config;
pub mod error;
pub mod partition;
pub mod runner;

pub use config::{load, parse, ExperimentConfig, LoadedConfig};
pub use error::ConfigError;
pub use runner::{run_experiment, RunOptions, RunSummary};
