use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while reading or splitting datasets.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad IDX magic: expected 0x{expected:08x}, found 0x{found:08x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("truncated IDX data: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("label {label} at position {index} is out of range for {num_classes} classes")]
    LabelOutOfRange {
        index: usize,
        label: u8,
        num_classes: usize,
    },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("class {0} has no examples in the dataset")]
    EmptyClass(usize),
    #[error("invalid class pair ({a}, {b}) for {num_classes} classes")]
    InvalidClassPair { a: usize, b: usize, num_classes: usize },
    #[error("infeasible split: {0}")]
    InfeasibleSplit(String),
}

/// Errors raised by the network: construction, numerics and training.
#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("input shape mismatch: expected {expected} values per item, found {found}")]
    InputShape { expected: usize, found: usize },
    #[error("non-finite activation at layer {layer}")]
    NonFinite { layer: usize },
    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("label {label} is out of range for {num_classes} classes")]
    Label { label: usize, num_classes: usize },
    #[error("empty training set")]
    EmptyTrainSet,
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

/// Errors raised by scoring, selection and cube handling.
#[derive(Debug, Error)]
pub enum AcquisitionError {
    #[error("cannot select {k} points from a pool of {n}")]
    Selection { k: usize, n: usize },
    #[error("unknown scorer '{0}' (valid: bald, max_entropy, var_ratios, mean_std, random)")]
    UnknownScorer(String),
    #[error("invalid cube: {0}")]
    InvalidCube(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

/// Errors raised by oracles.
#[derive(Debug, Error)]
pub enum OracleError {
    #[error("dataset index {index} is outside the dataset of {len} items")]
    OutOfRange { index: usize, len: usize },
    #[error("dataset index {0} requested twice in one batch")]
    Duplicate(usize),
    #[error("oracle timed out after {0:?}")]
    Timeout(std::time::Duration),
    #[error("oracle aborted: {0}")]
    Aborted(String),
    #[error("a query batch is already in flight")]
    BatchInFlight,
}

/// Errors raised by the active-learning loop and the experiment driver.
#[derive(Debug, Error)]
pub enum LoopError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Acquisition(#[from] AcquisitionError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("invalid loop configuration: {0}")]
    Config(String),
    #[error("pool invariant violated: {0}")]
    Invariant(String),
    #[error("unsupported task: {0}")]
    Unsupported(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

/// Errors raised by evaluation metrics and report aggregation.
#[derive(Debug, Error)]
pub enum MetricError {
    #[error("metric undefined: {0}")]
    Undefined(String),
    #[error("length mismatch: {scores} scores vs {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("incompatible run logs: {0}")]
    Incompatible(String),
}
