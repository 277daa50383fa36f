//! Shared queue handle used by the HTTP front end and the blocking loop
//! side. All mutations are serialised through one lock, written to the
//! journal first and then applied to the in-memory state.

use std::path::Path;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use mcal_core::data::ImageSet;
use mcal_core::error::OracleError;
use mcal_core::oracle::LoopStatus;
use serde::{Deserialize, Serialize};

use crate::error::{AnswerError, ServiceError};
use crate::journal::Journal;
use crate::queue::{Event, Query, QueueState};
use crate::render::png_base64;

/// A pending query as served to clients.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryView {
    pub query_id: String,
    pub dataset_index: usize,
    pub image_png_base64: String,
    pub num_classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusView {
    pub experiment_id: String,
    pub round: usize,
    /// Unanswered queries of the batch in flight.
    pub pending: usize,
    /// Answered queries of the batch in flight.
    pub answered: usize,
    pub labeled_size: usize,
    pub last_test_error: Option<f64>,
}

struct Inner {
    state: QueueState,
    journal: Option<Journal>,
    cancelled: bool,
}

struct Shared {
    experiment_id: String,
    data: ImageSet,
    inner: Mutex<Inner>,
    changed: Condvar,
}

#[derive(Clone)]
pub struct OracleService {
    shared: Arc<Shared>,
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

impl OracleService {
    /// A service over `data` (the train source the loop draws indices
    /// from). With a journal path, earlier state is replayed from it and
    /// every change is appended to it.
    pub fn new(experiment_id: impl Into<String>, data: ImageSet, journal: Option<&Path>) -> Result<Self, ServiceError> {
        let mut state = QueueState::default();
        let journal = match journal {
            Some(path) => {
                let (journal, events) = Journal::open(path)?;
                for event in &events {
                    state.apply(event)?;
                }
                Some(journal)
            }
            None => None,
        };
        let experiment_id = experiment_id.into();
        if state.status().experiment_id.is_empty() {
            state.apply(&Event::Status(LoopStatus {
                experiment_id: experiment_id.clone(),
                ..LoopStatus::default()
            }))?;
        }
        Ok(Self {
            shared: Arc::new(Shared {
                experiment_id,
                data,
                inner: Mutex::new(Inner {
                    state,
                    journal,
                    cancelled: false,
                }),
                changed: Condvar::new(),
            }),
        })
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.shared.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn commit(inner: &mut Inner, event: &Event) -> Result<(), ServiceError> {
        let mut next = inner.state.clone();
        next.apply(event)?;
        if let Some(j) = inner.journal.as_mut() {
            j.append(event)?;
        }
        inner.state = next;
        Ok(())
    }

    pub fn experiment_id(&self) -> &str {
        &self.shared.experiment_id
    }

    pub fn dataset_len(&self) -> usize {
        self.shared.data.len()
    }

    pub fn num_classes(&self) -> usize {
        self.shared.data.num_classes()
    }

    /// Copy of the queue state.
    pub fn snapshot(&self) -> QueueState {
        self.lock().state.clone()
    }

    /// Pending queries with their rendered images, in request order.
    pub fn queries(&self) -> Vec<QueryView> {
        let pending: Vec<Query> = self.lock().state.pending().into_iter().cloned().collect();
        let data = &self.shared.data;
        pending
            .into_iter()
            .map(|q| QueryView {
                image_png_base64: png_base64(data.image(q.dataset_index), data.width(), data.height()),
                query_id: q.query_id,
                dataset_index: q.dataset_index,
                num_classes: q.num_classes,
            })
            .collect()
    }

    pub fn status(&self) -> StatusView {
        let inner = self.lock();
        let s = inner.state.status();
        StatusView {
            experiment_id: self.shared.experiment_id.clone(),
            round: s.round,
            pending: inner.state.pending().len(),
            answered: inner.state.answered_in_batch(),
            labeled_size: s.labeled_size,
            last_test_error: s.last_test_error,
        }
    }

    /// Records an answer. Refused answers change nothing.
    pub fn answer(&self, query_id: &str, label: i64) -> Result<Result<(), AnswerError>, ServiceError> {
        let mut inner = self.lock();
        let event = match inner.state.plan_answer(query_id, label, now_ms()) {
            Ok(e) => e,
            Err(refused) => return Ok(Err(refused)),
        };
        Self::commit(&mut inner, &event)?;
        self.shared.changed.notify_all();
        Ok(Ok(()))
    }

    pub fn update_status(&self, status: &LoopStatus) -> Result<(), ServiceError> {
        let mut inner = self.lock();
        Self::commit(&mut inner, &Event::Status(status.clone()))
    }

    /// Queues `indices` as the next batch, or resumes the batch in flight
    /// when it asks for exactly these indices (as after a restart).
    pub fn enqueue(&self, indices: &[usize]) -> Result<Vec<Query>, OracleError> {
        let mut inner = self.lock();
        inner.cancelled = false;
        if let Some(b) = inner.state.in_flight() {
            let same = b.queries.len() == indices.len()
                && b.queries.iter().zip(indices).all(|(q, &i)| q.dataset_index == i);
            return if same {
                Ok(b.queries.clone())
            } else {
                Err(OracleError::BatchInFlight)
            };
        }
        let event = inner.state.plan_enqueue(indices, self.num_classes(), now_ms())?;
        Self::commit(&mut inner, &event).map_err(|e| OracleError::Aborted(e.to_string()))?;
        self.shared.changed.notify_all();
        let queries = inner.state.in_flight().map(|b| b.queries.clone()).unwrap_or_default();
        Ok(queries)
    }

    /// Blocks until every query of the batch in flight is answered, then
    /// closes the batch and returns its labels in request order. The batch
    /// stays open on timeout or cancellation.
    pub fn await_labels(&self, timeout: Duration) -> Result<Vec<u8>, OracleError> {
        let deadline = Instant::now() + timeout;
        let mut inner = self.lock();
        loop {
            if inner.cancelled {
                inner.cancelled = false;
                return Err(OracleError::Aborted("cancelled".into()));
            }
            let batch = inner
                .state
                .in_flight()
                .map(|b| b.batch)
                .ok_or_else(|| OracleError::Aborted("no batch in flight".into()))?;
            if let Some(labels) = inner.state.labels() {
                Self::commit(&mut inner, &Event::Completed { batch })
                    .map_err(|e| OracleError::Aborted(e.to_string()))?;
                return Ok(labels);
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(OracleError::Timeout(timeout));
            }
            inner = self
                .shared
                .changed
                .wait_timeout(inner, deadline - now)
                .unwrap_or_else(|p| p.into_inner())
                .0;
        }
    }

    /// Wakes a blocked [`await_labels`](Self::await_labels) with an error.
    pub fn cancel(&self) {
        self.lock().cancelled = true;
        self.shared.changed.notify_all();
    }
}
