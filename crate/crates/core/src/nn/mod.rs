//! A small sequential CNN with dropout, trained by minibatch SGD.

mod arch;
pub mod checkpoint;
mod model;
pub mod ops;
mod scalar;
mod train;

pub use arch::{Architecture, LayerSpec, Shape};
pub use model::{ForwardMode, Grads, ModelState, Param, PROB_EPS};
pub use scalar::{matmul, Scalar};
pub use train::{argmax, error_rate, train, weight_decay_rule, Batch, TrainConfig, TrainOutcome};
