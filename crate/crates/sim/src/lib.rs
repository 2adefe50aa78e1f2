//! Scenario runner for the cargo multirotor: configuration, the multi-rate
//! closed loop, convergence detection and output files.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;
pub mod runner;
pub mod scenario;

pub use config::{ConfigError, ScenarioId, SimConfig};
pub use runner::{detect_convergence, run_scenario, RunLog, Termination};
