//! Acquisition functions over a probability cube and top-k selection.

use std::cmp::Ordering;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::AcquisitionError;
use crate::infer::ProbCube;
use crate::nn::PROB_EPS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scorer {
    Bald,
    MaxEntropy,
    VarRatios,
    MeanStd,
    Random,
}

impl Scorer {
    pub const ALL: [Scorer; 5] = [
        Scorer::Bald,
        Scorer::MaxEntropy,
        Scorer::VarRatios,
        Scorer::MeanStd,
        Scorer::Random,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Scorer::Bald => "bald",
            Scorer::MaxEntropy => "max_entropy",
            Scorer::VarRatios => "var_ratios",
            Scorer::MeanStd => "mean_std",
            Scorer::Random => "random",
        }
    }

    /// One score per item of the cube; higher means more informative.
    /// Only `Random` consumes `rng`.
    pub fn score<R: Rng + ?Sized>(self, cube: &ProbCube, rng: &mut R) -> Vec<f64> {
        match self {
            Scorer::Bald => bald(cube),
            Scorer::MaxEntropy => max_entropy(cube),
            Scorer::VarRatios => var_ratios(cube),
            Scorer::MeanStd => mean_std(cube),
            Scorer::Random => random_scores(cube.items(), rng),
        }
    }
}

impl fmt::Display for Scorer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Scorer {
    type Err = AcquisitionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scorer::ALL
            .into_iter()
            .find(|sc| sc.id() == s)
            .ok_or_else(|| AcquisitionError::UnknownScorer(s.to_string()))
    }
}

/// `p ln p` with the log argument clamped at [`PROB_EPS`] and `0 ln 0 = 0`.
fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.max(PROB_EPS).ln()
    } else {
        0.0
    }
}

/// Shannon entropy in nats.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().map(|&p| plogp(p)).sum::<f64>()
}

/// Entropy of the predictive mean, per item.
pub fn max_entropy(cube: &ProbCube) -> Vec<f64> {
    cube.predictive_mean()
        .chunks(cube.classes())
        .map(entropy)
        .collect()
}

/// Mutual information between prediction and weights:
/// `H[mean_t p_t] - mean_t H[p_t]`.
pub fn bald(cube: &ProbCube) -> Vec<f64> {
    let t = cube.samples() as f64;
    max_entropy(cube)
        .into_iter()
        .enumerate()
        .map(|(n, h)| {
            let expected: f64 = (0..cube.samples()).map(|s| entropy(cube.row(s, n))).sum::<f64>() / t;
            h - expected
        })
        .collect()
}

/// `1 - max_c mean_t p_t(c)`.
pub fn var_ratios(cube: &ProbCube) -> Vec<f64> {
    cube.predictive_mean()
        .chunks(cube.classes())
        .map(|row| 1.0 - row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

/// Per-class standard deviation over samples (population form), averaged
/// over classes.
pub fn mean_std(cube: &ProbCube) -> Vec<f64> {
    let classes = cube.classes();
    let t = cube.samples() as f64;
    let mean = cube.predictive_mean();
    (0..cube.items())
        .map(|n| {
            let m = &mean[n * classes..(n + 1) * classes];
            let mut sq = vec![0.0; classes];
            for s in 0..cube.samples() {
                for ((acc, &p), &mu) in sq.iter_mut().zip(cube.row(s, n)).zip(m) {
                    *acc += (p - mu) * (p - mu);
                }
            }
            sq.iter().map(|v| (v / t).max(0.0).sqrt()).sum::<f64>() / classes as f64
        })
        .collect()
}

/// Independent uniform draws on `[0, 1)`.
pub fn random_scores<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>()).collect()
}

/// How equal scores are ordered during selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TieBreak {
    LowestIndex,
    SeededShuffle { seed: u64 },
}

impl Default for TieBreak {
    fn default() -> Self {
        TieBreak::LowestIndex
    }
}

/// Positions of the `k` highest scores, best first.
pub fn select_top_k(scores: &[f64], k: usize, tie: TieBreak) -> Result<Vec<usize>, AcquisitionError> {
    if k > scores.len() {
        return Err(AcquisitionError::Selection { k, n: scores.len() });
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(AcquisitionError::Precondition(format!("score {i} is NaN")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    if let TieBreak::SeededShuffle { seed } = tie {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    // Stable sort: equal scores keep the ascending or shuffled order.
    let by_score = |a: &usize, b: &usize| -> Ordering { scores[*b].total_cmp(&scores[*a]) };
    if k < order.len() {
        let stable_rank: Vec<usize> = {
            let mut r = vec![0; order.len()];
            for (pos, &i) in order.iter().enumerate() {
                r[i] = pos;
            }
            r
        };
        order.select_nth_unstable_by(k, |a, b| by_score(a, b).then(stable_rank[*a].cmp(&stable_rank[*b])));
        order.truncate(k);
        order.sort_by(|a, b| by_score(a, b).then(stable_rank[*a].cmp(&stable_rank[*b])));
    } else {
        order.sort_by(by_score);
    }
    Ok(order)
}

/// Writes `pool_index,score` rows.
pub fn write_scores_csv<W: Write>(mut out: W, pool: &[usize], scores: &[f64]) -> std::io::Result<()> {
    writeln!(out, "pool_index,score")?;
    for (i, s) in pool.iter().zip(scores) {
        writeln!(out, "{i},{s}")?;
    }
    Ok(())
}
