//! Label sources for acquired pool points.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::data::ImageSet;
use crate::error::OracleError;

/// Progress of the running loop, surfaced to human-facing oracles.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoopStatus {
    pub experiment_id: String,
    pub round: usize,
    pub labeled_size: usize,
    pub last_test_error: Option<f64>,
}

pub trait Oracle {
    /// Labels for `indices` (dataset indices), in the same order. Blocks
    /// until every label is available or the oracle gives up.
    fn label(&mut self, indices: &[usize]) -> Result<Vec<u8>, OracleError>;

    /// Called after every evaluation.
    fn observe(&mut self, _status: &LoopStatus) {}
}

/// Rejects out-of-range and repeated indices in one request.
pub fn check_request(indices: &[usize], len: usize) -> Result<(), OracleError> {
    let mut seen = HashSet::with_capacity(indices.len());
    for &index in indices {
        if index >= len {
            return Err(OracleError::OutOfRange { index, len });
        }
        if !seen.insert(index) {
            return Err(OracleError::Duplicate(index));
        }
    }
    Ok(())
}

/// Answers with the dataset's ground-truth labels.
#[derive(Debug, Clone)]
pub struct SimulatedOracle {
    labels: Vec<u8>,
}

impl SimulatedOracle {
    pub fn new(data: &ImageSet) -> Self {
        Self {
            labels: data.labels().to_vec(),
        }
    }

    pub fn from_labels(labels: Vec<u8>) -> Self {
        Self { labels }
    }
}

impl Oracle for SimulatedOracle {
    fn label(&mut self, indices: &[usize]) -> Result<Vec<u8>, OracleError> {
        check_request(indices, self.labels.len())?;
        Ok(indices.iter().map(|&i| self.labels[i]).collect())
    }
}

impl<O: Oracle + ?Sized> Oracle for &mut O {
    fn label(&mut self, indices: &[usize]) -> Result<Vec<u8>, OracleError> {
        (**self).label(indices)
    }

    fn observe(&mut self, status: &LoopStatus) {
        (**self).observe(status)
    }
}

impl<O: Oracle + ?Sized> Oracle for Box<O> {
    fn label(&mut self, indices: &[usize]) -> Result<Vec<u8>, OracleError> {
        (**self).label(indices)
    }

    fn observe(&mut self, status: &LoopStatus) {
        (**self).observe(status)
    }
}
