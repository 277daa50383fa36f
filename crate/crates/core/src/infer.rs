//! MC-dropout posterior samples and the deterministic point-mass baseline.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AcquisitionError, NnError};
use crate::nn::{argmax, Batch, ForwardMode, ModelState, Scalar};

/// Tolerance on row sums of a probability cube.
pub const ROW_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CubeMode {
    Mc,
    Deterministic,
}

/// `T x N x C` softmax outputs: entry `(t, n, c)` is the probability of
/// class `c` for input `n` under weight sample `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbCube {
    samples: usize,
    items: usize,
    classes: usize,
    mode: CubeMode,
    probs: Vec<f64>,
}

impl ProbCube {
    pub fn new(
        probs: Vec<f64>,
        samples: usize,
        items: usize,
        classes: usize,
        mode: CubeMode,
    ) -> Result<Self, AcquisitionError> {
        let bad = |m: String| Err(AcquisitionError::InvalidCube(m));
        if samples == 0 || classes == 0 {
            return bad("cube needs at least one sample and one class".into());
        }
        if probs.len() != samples * items * classes {
            return bad(format!(
                "{} values for dims ({samples}, {items}, {classes})",
                probs.len()
            ));
        }
        if mode == CubeMode::Deterministic && samples != 1 {
            return bad(format!("deterministic cube with {samples} samples"));
        }
        for (r, row) in probs.chunks(classes).enumerate() {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return bad(format!("row {r} has entries outside [0, 1]"));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return bad(format!("row {r} sums to {sum}"));
            }
        }
        Ok(Self {
            samples,
            items,
            classes,
            mode,
            probs,
        })
    }

    /// Builds an MC cube from nested `[t][n][c]` rows.
    pub fn from_nested(rows: &[Vec<Vec<f64>>]) -> Result<Self, AcquisitionError> {
        let samples = rows.len();
        let items = rows.first().map_or(0, Vec::len);
        let classes = rows
            .first()
            .and_then(|r| r.first())
            .map_or(0, Vec::len);
        if rows
            .iter()
            .any(|s| s.len() != items || s.iter().any(|r| r.len() != classes))
        {
            return Err(AcquisitionError::InvalidCube("ragged nested rows".into()));
        }
        let flat = rows.iter().flatten().flatten().copied().collect();
        Self::new(flat, samples, items, classes, CubeMode::Mc)
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn items(&self) -> usize {
        self.items
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn mode(&self) -> CubeMode {
        self.mode
    }

    pub fn values(&self) -> &[f64] {
        &self.probs
    }

    /// Class probabilities of item `n` under sample `t`.
    pub fn row(&self, t: usize, n: usize) -> &[f64] {
        let start = (t * self.items + n) * self.classes;
        &self.probs[start..start + self.classes]
    }

    /// Arithmetic mean over samples, `N x C` row-major.
    pub fn predictive_mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.items * self.classes];
        for sample in self.probs.chunks(self.items * self.classes) {
            for (m, &p) in mean.iter_mut().zip(sample) {
                *m += p;
            }
        }
        let inv = 1.0 / self.samples as f64;
        mean.iter_mut().for_each(|m| *m *= inv);
        mean
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&CubeFile {
            dims: [self.samples, self.items, self.classes],
            mode: self.mode,
            values: self.probs.clone(),
        })
        .expect("cube serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, AcquisitionError> {
        let f: CubeFile =
            serde_json::from_str(text).map_err(|e| AcquisitionError::InvalidCube(e.to_string()))?;
        Self::new(f.values, f.dims[0], f.dims[1], f.dims[2], f.mode)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        fs::write(path, self.to_json())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AcquisitionError> {
        let text = fs::read_to_string(path.as_ref())
            .map_err(|e| AcquisitionError::InvalidCube(e.to_string()))?;
        Self::from_json(&text)
    }
}

/// On-disk cube: dims `(T, N, C)` and row-major values.
#[derive(Serialize, Deserialize)]
struct CubeFile {
    dims: [usize; 3],
    mode: CubeMode,
    values: Vec<f64>,
}

/// Rng for MC pass `t`: the ChaCha stream `t` of `seed`. Pass 0 is the
/// plain `ChaCha8Rng::seed_from_u64(seed)` stream.
pub fn pass_rng(seed: u64, t: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64);
    rng
}

/// `samples` stochastic forward passes with fresh dropout masks per pass.
/// The dropout-free prefix of the network is evaluated once and shared by
/// all passes.
pub fn mc_sample<S: Scalar>(
    model: &ModelState<S>,
    inputs: &[S],
    samples: usize,
    seed: u64,
) -> Result<ProbCube, NnError> {
    if samples == 0 {
        return Err(NnError::Config("MC sampling needs T >= 1".into()));
    }
    let features = model.features(inputs)?;
    let classes = model.num_classes();
    let items = inputs.len() / model.input_len();
    let mut probs = Vec::with_capacity(samples * items * classes);
    for t in 0..samples {
        let p = model.forward_from_features(&features, ForwardMode::McDropout, &mut pass_rng(seed, t))?;
        probs.extend(p.into_iter().map(Scalar::as_f64));
    }
    Ok(cube_from_network(probs, samples, items, classes, CubeMode::Mc))
}

/// Single forward pass with dropout disabled: the weights treated as a
/// point mass.
pub fn deterministic_probs<S: Scalar>(
    model: &ModelState<S>,
    inputs: &[S],
) -> Result<ProbCube, NnError> {
    let classes = model.num_classes();
    let items = inputs.len() / model.input_len();
    let probs = model
        .forward_deterministic(inputs)?
        .into_iter()
        .map(Scalar::as_f64)
        .collect();
    Ok(cube_from_network(probs, 1, items, classes, CubeMode::Deterministic))
}

/// Network softmax rows are normalised in the network's precision; rows
/// are renormalised in f64 so f32 rounding never trips the cube check.
fn cube_from_network(
    mut probs: Vec<f64>,
    samples: usize,
    items: usize,
    classes: usize,
    mode: CubeMode,
) -> ProbCube {
    for row in probs.chunks_mut(classes) {
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= sum);
    }
    ProbCube {
        samples,
        items,
        classes,
        mode,
        probs,
    }
}

/// How test error is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EvalMode {
    /// Dropout disabled, weights scaled (the standard test-time
    /// approximation).
    Deterministic,
    /// Argmax of the predictive mean over `samples` MC passes.
    Mc { samples: usize },
}

/// Test error plus the positive-class scores used for AUC on binary tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub error: f64,
    pub mean_probs: Vec<f64>,
    pub classes: usize,
}

impl Evaluation {
    /// Predictive probability of class 1 per item (binary tasks).
    pub fn positive_scores(&self) -> Option<Vec<f64>> {
        (self.classes == 2).then(|| self.mean_probs.chunks(2).map(|r| r[1]).collect())
    }
}

pub fn evaluate<S: Scalar>(
    model: &ModelState<S>,
    test: &Batch<S>,
    mode: EvalMode,
    seed: u64,
) -> Result<Evaluation, NnError> {
    if test.is_empty() {
        return Err(NnError::Config("empty test set".into()));
    }
    let cube = match mode {
        EvalMode::Deterministic => deterministic_probs(model, &test.inputs)?,
        EvalMode::Mc { samples } => mc_sample(model, &test.inputs, samples, seed)?,
    };
    let classes = cube.classes();
    let mean = cube.predictive_mean();
    let wrong = mean
        .chunks(classes)
        .zip(&test.labels)
        .filter(|(row, &l)| argmax(row) != l as usize)
        .count();
    Ok(Evaluation {
        error: wrong as f64 / test.len() as f64,
        mean_probs: mean,
        classes,
    })
}

/// Fraction of argmax-misclassified test points.
pub fn test_error<S: Scalar>(
    model: &ModelState<S>,
    test: &Batch<S>,
    mode: EvalMode,
    seed: u64,
) -> Result<f64, NnError> {
    evaluate(model, test, mode, seed).map(|e| e.error)
}
