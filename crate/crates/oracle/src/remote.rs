//! The loop-side oracle backed by the query queue.

use std::time::Duration;

use mcal_core::error::OracleError;
use mcal_core::oracle::{check_request, LoopStatus, Oracle};

use crate::service::OracleService;

pub struct RemoteOracle {
    service: OracleService,
    timeout: Duration,
}

impl RemoteOracle {
    pub fn new(service: OracleService, timeout: Duration) -> Self {
        Self { service, timeout }
    }

    pub fn service(&self) -> &OracleService {
        &self.service
    }
}

impl Oracle for RemoteOracle {
    fn label(&mut self, indices: &[usize]) -> Result<Vec<u8>, OracleError> {
        check_request(indices, self.service.dataset_len())?;
        if indices.is_empty() {
            return Ok(Vec::new());
        }
        self.service.enqueue(indices)?;
        self.service.await_labels(self.timeout)
    }

    fn observe(&mut self, status: &LoopStatus) {
        // Status is informational; a journal failure surfaces on the next
        // label request instead.
        let _ = self.service.update_status(status);
    }
}
