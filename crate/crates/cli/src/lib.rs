//! Command-line driver: training runs, standalone evaluation, dropout
//! sweeps and learning-curve plots.
//!
//! Every run directory holds `config.resolved.toml`, one
//! `metrics_seed{S}.csv` and one `checkpoint_seed{S}.bin` per seed.

use std::fmt;

pub mod commands;
pub mod config;
pub mod metrics;
pub mod plot;

pub use config::RunConfig;

/// Exit code for unreadable or invalid input.
pub const EXIT_INPUT: i32 = 2;
/// Exit code for failures while running.
pub const EXIT_RUNTIME: i32 = 1;
/// Exit code when training stopped on a non-finite loss.
pub const EXIT_NONFINITE: i32 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError { code: EXIT_INPUT, message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError { code: EXIT_RUNTIME, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}
