//! Experiment harness around `clm-core`: TOML configs, run artifacts,
//! seed benchmarks and the gradient check.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod output;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use experiment::{run_experiment, Outcome};
