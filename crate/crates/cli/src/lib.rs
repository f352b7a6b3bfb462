//! Command-line front end: run configuration, experiment orchestration and
//! CSV artifacts.

pub mod commands;
pub mod config;

pub use commands::{cmd_compare, cmd_metrics, cmd_run, cmd_simulate_schedule, run_one, RunSummary};
pub use config::RunConfig;
