//! Experiment runner for the `cabm` library: kernel tables, intensity
//! evaluation, simulation dumps and validation suites.

pub mod config;
pub mod output;
pub mod suites;
pub mod tasks;

use thiserror::Error;

pub use config::{ConfigError, ExperimentConfig, Task};
pub use output::{RunOutput, Table};
pub use suites::{Check, Suite, SuiteContext, SuiteOutcome, SuiteParams};

/// Exit status for configuration errors.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status when a validation ran to completion and failed.
pub const EXIT_VALIDATION_FAILED: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Suite(#[from] suites::SuiteError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            _ => 1,
        }
    }
}
