use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{ModelState, Param};
use super::scalar::Scalar;
use crate::data::ImageSet;
use crate::error::NnError;

/// Inputs converted to the network's scalar type, with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<S> {
    pub inputs: Vec<S>,
    pub labels: Vec<u8>,
}

impl<S: Scalar> Batch<S> {
    pub fn from_indices(data: &ImageSet, indices: &[usize]) -> Self {
        Self::with_labels(data, indices, data.gather_labels(indices))
    }

    /// Same images, labels supplied by the caller (e.g. an oracle).
    pub fn with_labels(data: &ImageSet, indices: &[usize], labels: Vec<u8>) -> Self {
        let inputs = data
            .gather(indices)
            .into_iter()
            .map(|v| S::of(v as f64))
            .collect();
        Self { inputs, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a strict validation improvement before stopping.
    pub early_stop_patience: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            batch_size: 32,
            max_epochs: 200,
            early_stop_patience: 10,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: &str| Err(NnError::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be positive");
        }
        if self.early_stop_patience == 0 {
            return bad("early_stop_patience must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be nonnegative");
        }
        Ok(())
    }
}

/// L2 coefficient `(1 - p) * l^2 / n` tying dropout rate `p`, prior
/// length-scale `l` and training-set size `n`.
pub fn weight_decay_rule(dropout: f64, length_scale_sq: f64, n: usize) -> f64 {
    (1.0 - dropout) * length_scale_sq / n.max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Validation error of the returned weights (`None` without a
    /// validation set).
    pub best_val_error: Option<f64>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    /// Mean minibatch loss over the last epoch run.
    pub last_train_loss: f64,
}

/// Fraction of rows whose argmax (lowest index on ties) differs from the
/// label.
pub fn error_rate<S: Scalar>(probs: &[S], labels: &[u8], classes: usize) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let wrong = probs
        .chunks(classes)
        .zip(labels)
        .filter(|(row, &l)| argmax(row) != l as usize)
        .count();
    wrong as f64 / labels.len() as f64
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax<S: PartialOrd + Copy>(row: &[S]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

fn deterministic_error<S: Scalar>(model: &ModelState<S>, set: &Batch<S>) -> Result<f64, NnError> {
    let probs = model.forward_deterministic(&set.inputs)?;
    Ok(error_rate(&probs, &set.labels, model.num_classes()))
}

/// Minibatch SGD with a reshuffle every epoch. Stops after `max_epochs` or
/// once validation error has not strictly improved for
/// `early_stop_patience` epochs, then restores the best-validation weights
/// (the latest among equals).
pub fn train<S: Scalar>(
    model: &mut ModelState<S>,
    train_set: &Batch<S>,
    val_set: &Batch<S>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, NnError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(NnError::EmptyTrainSet);
    }
    let item = model.input_len();
    let n = train_set.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut best: Option<(f64, usize, Vec<Option<Param<S>>>)> = None;
    let mut since_improvement = 0;
    let mut epochs_run = 0;
    let mut last_train_loss = f64::NAN;
    let mut inputs = Vec::with_capacity(cfg.batch_size * item);
    let mut labels = Vec::with_capacity(cfg.batch_size);

    for epoch in 1..=cfg.max_epochs {
        epochs_run = epoch;
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut steps = 0;
        for chunk in order.chunks(cfg.batch_size) {
            inputs.clear();
            labels.clear();
            for &i in chunk {
                inputs.extend_from_slice(&train_set.inputs[i * item..(i + 1) * item]);
                labels.push(train_set.labels[i]);
            }
            let (loss, grads) = match model.loss_and_grads(&inputs, &labels, cfg.weight_decay, &mut rng) {
                Ok(r) => r,
                Err(NnError::NonFinite { .. }) => {
                    return Err(NnError::Diverged { epoch, loss: f64::NAN })
                }
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                return Err(NnError::Diverged { epoch, loss });
            }
            model.apply_sgd(&grads, cfg.learning_rate);
            loss_sum += loss;
            steps += 1;
        }
        last_train_loss = loss_sum / steps as f64;

        if val_set.is_empty() {
            continue;
        }
        let err = match deterministic_error(model, val_set) {
            Ok(e) => e,
            Err(NnError::NonFinite { .. }) => {
                return Err(NnError::Diverged { epoch, loss: f64::NAN })
            }
            Err(e) => return Err(e),
        };
        match &best {
            Some((b, _, _)) if err > *b => {
                since_improvement += 1;
            }
            Some((b, _, _)) if err == *b => {
                since_improvement += 1;
                best = Some((err, epoch, model.params().to_vec()));
            }
            _ => {
                since_improvement = 0;
                best = Some((err, epoch, model.params().to_vec()));
            }
        }
        if since_improvement >= cfg.early_stop_patience {
            break;
        }
    }

    Ok(match best {
        Some((err, epoch, params)) => {
            model.params_mut().clone_from_slice(&params);
            TrainOutcome {
                best_val_error: Some(err),
                best_epoch: epoch,
                epochs_run,
                last_train_loss,
            }
        }
        None => TrainOutcome {
            best_val_error: None,
            best_epoch: epochs_run,
            epochs_run,
            last_train_loss,
        },
    })
}
