//! Index bookkeeping for the labelled set, validation set and pool.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::LoopError;

/// One acquisition step: which pool indices moved into the labelled set and
/// the labels the oracle gave them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Acquisition {
    pub round: usize,
    pub indices: Vec<usize>,
    pub labels: Vec<u8>,
    pub scorer: String,
}

/// Partition of the train-source dataset into labelled, validation and pool
/// indices. The test split lives in a separate dataset and is only tracked
/// by size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolState {
    labeled: Vec<usize>,
    labeled_labels: Vec<u8>,
    validation: Vec<usize>,
    /// Sorted ascending.
    pool: Vec<usize>,
    test_len: usize,
    history: Vec<Acquisition>,
}

impl PoolState {
    pub fn new(
        labeled: Vec<usize>,
        labeled_labels: Vec<u8>,
        validation: Vec<usize>,
        mut pool: Vec<usize>,
        test_len: usize,
    ) -> Self {
        pool.sort_unstable();
        Self {
            labeled,
            labeled_labels,
            validation,
            pool,
            test_len,
            history: Vec::new(),
        }
    }

    pub fn labeled(&self) -> &[usize] {
        &self.labeled
    }

    pub fn labeled_labels(&self) -> &[u8] {
        &self.labeled_labels
    }

    pub fn validation(&self) -> &[usize] {
        &self.validation
    }

    pub fn pool(&self) -> &[usize] {
        &self.pool
    }

    pub fn test_len(&self) -> usize {
        self.test_len
    }

    pub fn history(&self) -> &[Acquisition] {
        &self.history
    }

    /// The state before any acquisition, recovered by undoing the history.
    pub fn initial(&self) -> PoolState {
        let acquired: usize = self.history.iter().map(|a| a.indices.len()).sum();
        let keep = self.labeled.len() - acquired;
        let mut pool = self.pool.clone();
        pool.extend(self.history.iter().flat_map(|a| a.indices.iter().copied()));
        PoolState::new(
            self.labeled[..keep].to_vec(),
            self.labeled_labels[..keep].to_vec(),
            self.validation.clone(),
            pool,
            self.test_len,
        )
    }

    /// Moves `indices` from the pool into the labelled set. Either every
    /// index moves or the state is left untouched.
    pub fn acquire(&mut self, acquisition: Acquisition) -> Result<(), LoopError> {
        if acquisition.indices.len() != acquisition.labels.len() {
            return Err(LoopError::Invariant(format!(
                "{} indices but {} labels",
                acquisition.indices.len(),
                acquisition.labels.len()
            )));
        }
        let mut seen = HashSet::with_capacity(acquisition.indices.len());
        for &i in &acquisition.indices {
            if !seen.insert(i) {
                return Err(LoopError::Invariant(format!(
                    "index {i} acquired twice in round {}",
                    acquisition.round
                )));
            }
            if self.pool.binary_search(&i).is_err() {
                return Err(LoopError::Invariant(format!(
                    "index {i} is not in the pool (round {})",
                    acquisition.round
                )));
            }
        }
        self.pool.retain(|i| !seen.contains(i));
        self.labeled.extend_from_slice(&acquisition.indices);
        self.labeled_labels.extend_from_slice(&acquisition.labels);
        self.history.push(acquisition);
        Ok(())
    }

    /// Verifies that labelled, validation and pool sets are pairwise disjoint
    /// and that no index was acquired in two rounds.
    pub fn check_partition(&self) -> Result<(), LoopError> {
        let mut seen = HashSet::new();
        for (name, set) in [
            ("labeled", &self.labeled),
            ("validation", &self.validation),
            ("pool", &self.pool),
        ] {
            for &i in set.iter() {
                if !seen.insert(i) {
                    return Err(LoopError::Invariant(format!(
                        "index {i} appears twice (last seen in {name})"
                    )));
                }
            }
        }
        if self.labeled.len() != self.labeled_labels.len() {
            return Err(LoopError::Invariant("label count mismatch".into()));
        }
        Ok(())
    }
}

/// Re-applies an acquisition history to an initial split.
pub fn replay(initial: &PoolState, history: &[Acquisition]) -> Result<PoolState, LoopError> {
    let mut state = initial.clone();
    for a in history {
        state.acquire(a.clone())?;
    }
    Ok(state)
}
