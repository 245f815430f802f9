//! Command-line front end: pretraining, discrete search, evaluation, QUBO
//! reduction and run reports.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod pipeline;

pub use commands::{run, run_from, Cli, Command};
pub use config::RunConfig;
pub use error::CliError;
