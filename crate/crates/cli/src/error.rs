use std::path::PathBuf;

use mcal_core::error::{DataError, LoopError, MetricError};
use mcal_oracle::ServiceError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or configuration; exit code 2.
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Loop(#[from] LoopError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}
