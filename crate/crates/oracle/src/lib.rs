//! Human oracle for the active-learning loop. Each acquisition batch is
//! queued as label queries behind a small HTTP API; a browser client
//! answers them and the loop, blocked in [`RemoteOracle::label`], receives
//! the labels keyed by dataset index. Queue state is journalled so that a
//! labelling session survives restarts.

pub mod error;
pub mod http;
pub mod journal;
pub mod queue;
pub mod remote;
pub mod render;
pub mod server;
pub mod service;

pub use error::{AnswerError, ServiceError};
pub use http::router;
pub use queue::{Answer, Event, Query, QueueState};
pub use remote::RemoteOracle;
pub use server::{port_from_env, spawn, ServerHandle, DEFAULT_PORT, PORT_ENV};
pub use service::{OracleService, QueryView, StatusView};
