//! Experiment harness: benchmark systems (Matrix Market or synthetic),
//! rank-deficient prior generators, the replicate protocol over methods and
//! ranks, and CSV/JSON output.

pub mod config;
pub mod emit;
pub mod error;
pub mod experiment;
pub mod mtx;
pub mod priors;
pub mod synth;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
pub use experiment::{run_experiment, ResultRow};
