//! Experiment configuration, orchestration and report emission.

mod config;
mod emit;
mod execute;
mod validate;

pub use config::{
    parse_config, parse_config_raw, parse_config_str, read_config, Command, CrosstalkTestConfig, ExperimentConfig, GridSpec,
    Overrides, SweepAttack, SweepConfig, TeleportConfig, SCHEMA_VERSION,
};
pub use emit::{emit, format_sig, write_csv};
pub use execute::{execute, ReportBundle, RunMetadata, Table};
pub use validate::{run_validation, CheckResult, CheckStatus};

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Module(#[from] crate::Error),
}

impl HarnessError {
    /// Process exit code for this failure category.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Validation(_) => 3,
            HarnessError::Io { .. } => 4,
            HarnessError::Module(_) => 5,
        }
    }
}

pub type HarnessResult<T> = std::result::Result<T, HarnessError>;
