//! Experiment harness for coordinate-network benchmarks: configuration,
//! seeded grid execution, leaderboards and kernel analysis.

pub mod analyze;
pub mod config;
pub mod error;
pub mod report;
pub mod runner;

pub use config::{ExperimentConfig, TaskSpec};
pub use error::BenchError;
pub use runner::{run_experiment, RunOptions, RunResult};
