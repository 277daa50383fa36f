use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the queue, its journal and the HTTP server.
#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt journal line {line}: {msg}")]
    Corrupt { line: usize, msg: String },
    #[error("journal event cannot be applied: {0}")]
    Replay(String),
    #[error("invalid {var}: {msg}")]
    Env { var: &'static str, msg: String },
    #[error("server error: {0}")]
    Server(String),
}

/// Reasons an answer is refused. The query, if any, stays as it was.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnswerError {
    #[error("query {0} was already answered")]
    Duplicate(String),
    #[error("unknown query {0}")]
    UnknownQuery(String),
    #[error("label {label} is outside 0..{num_classes}")]
    InvalidLabel { label: i64, num_classes: usize },
}
