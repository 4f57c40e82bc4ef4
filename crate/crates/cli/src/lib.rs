//! Experiment orchestration for the `fairmdp` binary: configuration files,
//! batch runs over seeds, CSV output and regret summaries.

pub mod config;
pub mod experiment;
pub mod output;
pub mod slope;

pub use config::{Algorithm, ExperimentConfig, Generator, InstanceSource};
pub use experiment::{run_experiment, RunSummary};
pub use slope::{fit_regret_slope, SlopeFit};

use fairmdp_core::FairError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] FairError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("solver did not converge: {0}")]
    NotConverged(String),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Process exit code: 2 for bad input, 3 for non-convergence, 1 for
    /// anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(FairError::Io(_)) | CliError::Csv(_) | CliError::Io(_) => 1,
            CliError::Core(_) | CliError::Config(_) | CliError::Json(_) => 2,
            CliError::NotConverged(_) => 3,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
