//! Pool-based active learning with Monte Carlo dropout CNNs.

pub mod acquisition;
pub mod al_loop;
pub mod config;
pub mod data;
pub mod error;
pub mod infer;
pub mod metrics;
pub mod nn;
pub mod oracle;
pub mod pool;
pub mod report;
