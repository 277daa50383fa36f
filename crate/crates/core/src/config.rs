//! Experiment configuration: one flat JSON object whose every field can be
//! overridden by a command-line flag of the same name.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::acquisition::Scorer;
use crate::data::SplitSpec;
use crate::error::LoopError;
use crate::infer::EvalMode;
use crate::nn::{weight_decay_rule, Architecture, Shape, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// All classes of the dataset.
    Multiclass,
    /// Two classes, relabelled `binary_negative -> 0`, `binary_positive -> 1`.
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightDecayMode {
    /// `(1 - p) l^2 / N`, recomputed from the labelled-set size every round.
    Rule,
    /// The rule scaled by the multiplier from `weight_decay_grid` with the
    /// lowest validation error at round 0.
    Grid,
    /// A constant `weight_decay_value`.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CubeKind {
    /// MC dropout with `mc_samples` passes.
    Mc,
    /// One dropout-free pass (point-mass weights).
    Deterministic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    LowestIndex,
    SeededShuffle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalKind {
    Deterministic,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    Simulated,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    pub data_dir: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub repeats: usize,

    pub task: TaskKind,
    pub binary_negative: u8,
    pub binary_positive: u8,
    /// Downsample the positive class of the train source to this share.
    pub positive_fraction: Option<f64>,

    pub initial_train_size: usize,
    pub validation_size: usize,
    pub balanced: bool,

    pub conv_filters: usize,
    pub conv_kernel: usize,
    pub pool_size: usize,
    pub hidden_units: usize,
    pub dropout_conv: f64,
    pub dropout_dense: f64,

    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub weight_decay_mode: WeightDecayMode,
    pub weight_decay_value: f64,
    pub length_scale_sq: f64,
    pub weight_decay_grid: Vec<f64>,

    pub scorer: Scorer,
    pub acquisition_size: usize,
    pub rounds: usize,
    pub mc_samples: usize,
    pub cube: CubeKind,
    pub tie_break: TiePolicy,
    /// Score a random subset of this many pool points per round.
    pub pool_subsample: Option<usize>,
    pub eval_mode: EvalKind,
    pub eval_mc_samples: usize,
    pub dump_scores: bool,

    pub oracle: OracleKind,
    pub oracle_timeout_s: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment_id: "mnist".into(),
            data_dir: PathBuf::from("data/mnist"),
            out: PathBuf::from("runs"),
            seed: 0,
            repeats: 1,
            task: TaskKind::Multiclass,
            binary_negative: 0,
            binary_positive: 1,
            positive_fraction: None,
            initial_train_size: 20,
            validation_size: 100,
            balanced: true,
            conv_filters: 32,
            conv_kernel: 4,
            pool_size: 2,
            hidden_units: 128,
            dropout_conv: 0.25,
            dropout_dense: 0.5,
            learning_rate: 0.05,
            batch_size: 32,
            max_epochs: 200,
            early_stop_patience: 10,
            weight_decay_mode: WeightDecayMode::Rule,
            weight_decay_value: 0.0,
            length_scale_sq: 0.5,
            weight_decay_grid: vec![1e-4, 1e-3, 1e-2, 1e-1],
            scorer: Scorer::Bald,
            acquisition_size: 10,
            rounds: 100,
            mc_samples: 50,
            cube: CubeKind::Mc,
            tie_break: TiePolicy::SeededShuffle,
            pool_subsample: None,
            eval_mode: EvalKind::Deterministic,
            eval_mc_samples: 20,
            dump_scores: false,
            oracle: OracleKind::Simulated,
            oracle_timeout_s: 3600,
        }
    }
}

fn field_error(field: &str, msg: impl std::fmt::Display) -> LoopError {
    LoopError::Config(format!("{field}: {msg}"))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, LoopError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), LoopError> {
        let positive = |field: &str, v: usize| {
            if v == 0 {
                Err(field_error(field, "must be positive"))
            } else {
                Ok(())
            }
        };
        positive("repeats", self.repeats)?;
        positive("acquisition_size", self.acquisition_size)?;
        positive("mc_samples", self.mc_samples)?;
        positive("eval_mc_samples", self.eval_mc_samples)?;
        positive("conv_filters", self.conv_filters)?;
        positive("conv_kernel", self.conv_kernel)?;
        positive("pool_size", self.pool_size)?;
        positive("hidden_units", self.hidden_units)?;
        positive("initial_train_size", self.initial_train_size)?;
        if self.experiment_id.is_empty()
            || !self
                .experiment_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
        {
            return Err(field_error(
                "experiment_id",
                "must be non-empty and use only letters, digits, '-', '_' or '.'",
            ));
        }
        if self.task == TaskKind::Binary && self.binary_negative == self.binary_positive {
            return Err(field_error("binary_positive", "must differ from binary_negative"));
        }
        if let Some(f) = self.positive_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(field_error("positive_fraction", "must lie in (0, 1)"));
            }
            if self.task != TaskKind::Binary {
                return Err(field_error("positive_fraction", "only applies to the binary task"));
            }
        }
        for (field, p) in [("dropout_conv", self.dropout_conv), ("dropout_dense", self.dropout_dense)] {
            if !(0.0..1.0).contains(&p) {
                return Err(field_error(field, "must lie in [0, 1)"));
            }
        }
        if !(self.length_scale_sq > 0.0) {
            return Err(field_error("length_scale_sq", "must be positive"));
        }
        if self.weight_decay_mode == WeightDecayMode::Grid
            && (self.weight_decay_grid.is_empty() || self.weight_decay_grid.iter().any(|m| !(*m > 0.0)))
        {
            return Err(field_error("weight_decay_grid", "needs positive multipliers"));
        }
        if !(self.weight_decay_value >= 0.0) {
            return Err(field_error("weight_decay_value", "must be nonnegative"));
        }
        if self.pool_subsample == Some(0) {
            return Err(field_error("pool_subsample", "must be positive"));
        }
        if let Some(m) = self.pool_subsample {
            if m < self.acquisition_size {
                return Err(field_error("pool_subsample", "must be at least acquisition_size"));
            }
        }
        self.train_config(0).validate().map_err(|e| field_error("train", e))?;
        self.architecture(Shape::new(28, 28, 1), 2)
            .shapes()
            .map_err(|e| field_error("architecture", e))?;
        Ok(())
    }

    pub fn architecture(&self, input: Shape, num_classes: usize) -> Architecture {
        Architecture::conv_net(
            input,
            num_classes,
            self.conv_filters,
            self.conv_kernel,
            self.pool_size,
            self.hidden_units,
            (self.dropout_conv, self.dropout_dense),
        )
    }

    /// Training settings; weight decay is filled in per round.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            early_stop_patience: self.early_stop_patience,
            weight_decay: 0.0,
            seed,
        }
    }

    pub fn split_spec(&self, seed: u64) -> SplitSpec {
        SplitSpec {
            initial_train_size: self.initial_train_size,
            validation_size: self.validation_size,
            test_source: "test".into(),
            balanced: self.balanced,
            seed,
        }
    }

    /// Rule value for a labelled set of `n` points; the dropout rate is the
    /// one before the final dense layer.
    pub fn rule_weight_decay(&self, n: usize) -> f64 {
        weight_decay_rule(self.dropout_dense, self.length_scale_sq, n)
    }

    pub fn eval(&self) -> EvalMode {
        match self.eval_mode {
            EvalKind::Deterministic => EvalMode::Deterministic,
            EvalKind::Mc => EvalMode::Mc {
                samples: self.eval_mc_samples,
            },
        }
    }

    /// Seed of repeat `r`.
    pub fn repeat_seed(&self, repeat: usize) -> u64 {
        self.seed.wrapping_add(repeat as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_json_fills_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"scorer": "var_ratios", "rounds": 5}"#).unwrap();
        assert_eq!(cfg.scorer, Scorer::VarRatios);
        assert_eq!(cfg.rounds, 5);
        assert_eq!(cfg.acquisition_size, 10);
    }

    #[test]
    fn errors_name_the_field() {
        let err = ExperimentConfig::from_json(r#"{"dropout_dense": 1.0}"#).unwrap_err();
        assert!(err.to_string().contains("dropout_dense"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"mc_samples": 0}"#).unwrap_err();
        assert!(err.to_string().contains("mc_samples"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"scorer": "nope"}"#).unwrap_err();
        assert!(err.to_string().contains("bald"), "{err}");
        assert!(ExperimentConfig::from_json(r#"{"unknown_field": 1}"#).is_err());
    }

    #[test]
    fn rule_uses_dense_dropout() {
        let cfg = ExperimentConfig::default();
        assert!((cfg.rule_weight_decay(20) - 0.0125).abs() < 1e-15);
    }
}
