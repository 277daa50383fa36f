//! The query queue as a pure state machine. Every change is an [`Event`];
//! live updates and journal replay go through the same [`QueueState::apply`].

use std::collections::{BTreeMap, HashSet};

use mcal_core::error::OracleError;
use mcal_core::oracle::LoopStatus;
use serde::{Deserialize, Serialize};

use crate::error::{AnswerError, ServiceError};

/// One point awaiting a label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: String,
    pub dataset_index: usize,
    pub num_classes: usize,
    /// Milliseconds since the Unix epoch.
    pub issued_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub query_id: String,
    pub label: u8,
    /// Milliseconds since the Unix epoch.
    pub answered_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Enqueued { batch: u64, queries: Vec<Query> },
    Answered(Answer),
    /// The loop collected the labels of the batch.
    Completed { batch: u64 },
    Status(LoopStatus),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InFlight {
    pub batch: u64,
    pub queries: Vec<Query>,
    pub answers: BTreeMap<String, Answer>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueueState {
    next_batch: u64,
    in_flight: Option<InFlight>,
    answered: HashSet<String>,
    status: LoopStatus,
}

impl QueueState {
    pub fn in_flight(&self) -> Option<&InFlight> {
        self.in_flight.as_ref()
    }

    pub fn status(&self) -> &LoopStatus {
        &self.status
    }

    /// Unanswered queries of the batch in flight, in request order.
    pub fn pending(&self) -> Vec<&Query> {
        self.in_flight
            .iter()
            .flat_map(|b| b.queries.iter().filter(|q| !b.answers.contains_key(&q.query_id)))
            .collect()
    }

    /// Number of answers received for the batch in flight.
    pub fn answered_in_batch(&self) -> usize {
        self.in_flight.as_ref().map_or(0, |b| b.answers.len())
    }

    /// Labels of the batch in flight in request order, once all are in.
    pub fn labels(&self) -> Option<Vec<u8>> {
        let b = self.in_flight.as_ref()?;
        b.queries
            .iter()
            .map(|q| b.answers.get(&q.query_id).map(|a| a.label))
            .collect()
    }

    /// Event that queues `indices` as a new batch.
    pub fn plan_enqueue(&self, indices: &[usize], num_classes: usize, now: u64) -> Result<Event, OracleError> {
        if self.in_flight.is_some() {
            return Err(OracleError::BatchInFlight);
        }
        let batch = self.next_batch;
        let queries = indices
            .iter()
            .map(|&dataset_index| Query {
                query_id: format!("b{batch}-i{dataset_index}"),
                dataset_index,
                num_classes,
                issued_at: now,
            })
            .collect();
        Ok(Event::Enqueued { batch, queries })
    }

    /// Event that records `label` for `query_id`.
    pub fn plan_answer(&self, query_id: &str, label: i64, now: u64) -> Result<Event, AnswerError> {
        if self.answered.contains(query_id) {
            return Err(AnswerError::Duplicate(query_id.to_string()));
        }
        let query = self
            .in_flight
            .as_ref()
            .and_then(|b| b.queries.iter().find(|q| q.query_id == query_id))
            .ok_or_else(|| AnswerError::UnknownQuery(query_id.to_string()))?;
        if label < 0 || label as usize >= query.num_classes {
            return Err(AnswerError::InvalidLabel {
                label,
                num_classes: query.num_classes,
            });
        }
        Ok(Event::Answered(Answer {
            query_id: query_id.to_string(),
            label: label as u8,
            answered_at: now,
        }))
    }

    pub fn apply(&mut self, event: &Event) -> Result<(), ServiceError> {
        match event {
            Event::Enqueued { batch, queries } => {
                if self.in_flight.is_some() {
                    return Err(ServiceError::Replay(format!("batch {batch} queued while another is in flight")));
                }
                if *batch != self.next_batch {
                    return Err(ServiceError::Replay(format!(
                        "batch {batch} out of sequence, expected {}",
                        self.next_batch
                    )));
                }
                self.in_flight = Some(InFlight {
                    batch: *batch,
                    queries: queries.clone(),
                    answers: BTreeMap::new(),
                });
                self.next_batch += 1;
            }
            Event::Answered(answer) => {
                let b = self
                    .in_flight
                    .as_mut()
                    .filter(|b| b.queries.iter().any(|q| q.query_id == answer.query_id))
                    .ok_or_else(|| ServiceError::Replay(format!("answer to unknown query {}", answer.query_id)))?;
                if !self.answered.insert(answer.query_id.clone()) {
                    return Err(ServiceError::Replay(format!("query {} answered twice", answer.query_id)));
                }
                b.answers.insert(answer.query_id.clone(), answer.clone());
            }
            Event::Completed { batch } => {
                match &self.in_flight {
                    Some(b) if b.batch == *batch && b.answers.len() == b.queries.len() => {}
                    _ => return Err(ServiceError::Replay(format!("batch {batch} completed while incomplete"))),
                }
                self.in_flight = None;
            }
            Event::Status(status) => self.status = status.clone(),
        }
        Ok(())
    }
}
