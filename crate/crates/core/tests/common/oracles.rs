//! Reference implementations written from the textbook definitions, with no
//! code shared with the library estimators.

use mcal_core::acquisition::{self, select_top_k, TieBreak};
use mcal_core::infer::ProbCube;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Frozen by 50-digit evaluation of the closed forms.
pub const ENTROPY_07_03: f64 = 0.610_864_302_054_893_5;
pub const MEAN_ENTROPY_TWO_SAMPLE: f64 = 0.586_707_045_273_722_2;
pub const BALD_TWO_SAMPLE: f64 = 0.024_157_256_781_171_305;
pub const VAR_RATIOS_TWO_SAMPLE: f64 = 0.3;
pub const MEAN_STD_TWO_SAMPLE: f64 = 0.1;
pub const FROZEN_TOL: f64 = 1e-9;
pub const ORACLE_TOL: f64 = 1e-12;

pub fn two_sample_cube() -> ProbCube {
    ProbCube::from_nested(&[vec![vec![0.8, 0.2]], vec![vec![0.6, 0.4]]]).unwrap()
}

/// `cube[t][c]` for a single item.
type Item = Vec<Vec<f64>>;

fn mean_of(item: &Item) -> Vec<f64> {
    let classes = item[0].len();
    (0..classes)
        .map(|c| item.iter().map(|row| row[c]).sum::<f64>() / item.len() as f64)
        .collect()
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.max(1e-10).ln()
    }
}

pub fn entropy_oracle(p: &[f64]) -> f64 {
    p.iter().fold(0.0, |acc, &x| acc - xlogy(x, x))
}

/// Mutual information between `y` and a uniformly drawn sample index `t`,
/// computed as the expected KL divergence from each sample to the mean.
pub fn bald_oracle(item: &Item) -> f64 {
    let mean = mean_of(item);
    let t = item.len() as f64;
    let mut mi = 0.0;
    for row in item {
        for (c, &p) in row.iter().enumerate() {
            if p > 0.0 {
                mi += (xlogy(p, p) - xlogy(p, mean[c])) / t;
            }
        }
    }
    mi
}

pub fn var_ratios_oracle(item: &Item) -> f64 {
    let mean = mean_of(item);
    let mut best = mean[0];
    for &m in &mean[1..] {
        if m > best {
            best = m;
        }
    }
    1.0 - best
}

/// `mean_c sqrt(E[p_c^2] - E[p_c]^2)`.
pub fn mean_std_oracle(item: &Item) -> f64 {
    let t = item.len() as f64;
    let classes = item[0].len();
    let mut total = 0.0;
    for c in 0..classes {
        let e1: f64 = item.iter().map(|r| r[c]).sum::<f64>() / t;
        let e2: f64 = item.iter().map(|r| r[c] * r[c]).sum::<f64>() / t;
        total += (e2 - e1 * e1).max(0.0).sqrt();
    }
    total / classes as f64
}

fn cube_of_items(items: &[Item]) -> ProbCube {
    let samples = items[0].len();
    let nested: Vec<Vec<Vec<f64>>> = (0..samples)
        .map(|t| items.iter().map(|it| it[t].clone()).collect())
        .collect();
    ProbCube::from_nested(&nested).unwrap()
}

pub fn check_frozen_examples() -> Result<(), String> {
    let cube = two_sample_cube();
    let item: Item = vec![vec![0.8, 0.2], vec![0.6, 0.4]];
    let checks = [
        ("entropy", acquisition::max_entropy(&cube)[0], ENTROPY_07_03),
        (
            "mean entropy",
            (acquisition::entropy(&[0.8, 0.2]) + acquisition::entropy(&[0.6, 0.4])) / 2.0,
            MEAN_ENTROPY_TWO_SAMPLE,
        ),
        ("bald", acquisition::bald(&cube)[0], BALD_TWO_SAMPLE),
        ("bald oracle", bald_oracle(&item), BALD_TWO_SAMPLE),
        ("var_ratios", acquisition::var_ratios(&cube)[0], VAR_RATIOS_TWO_SAMPLE),
        ("mean_std", acquisition::mean_std(&cube)[0], MEAN_STD_TWO_SAMPLE),
        ("mean_std oracle", mean_std_oracle(&item), MEAN_STD_TWO_SAMPLE),
    ];
    for (name, got, want) in checks {
        if (got - want).abs() > FROZEN_TOL {
            return Err(format!("{name}: got {got}, frozen {want}"));
        }
    }
    let flat = ProbCube::from_nested(&[vec![vec![0.1; 10]]]).unwrap();
    if (acquisition::max_entropy(&flat)[0] - 10f64.ln()).abs() > FROZEN_TOL
        || (acquisition::var_ratios(&flat)[0] - 0.9).abs() > FROZEN_TOL
    {
        return Err("uniform 10-class extremes".into());
    }
    Ok(())
}

/// All cubes with probabilities on a quarter grid for `C in {2, 3}` and
/// `T in {1, 2, 3}`. Returns the number of items compared.
pub fn check_exhaustive_agreement() -> Result<usize, String> {
    let mut compared = 0;
    for classes in 2..=3 {
        let rows = simplex_grid(classes, 4);
        for samples in 1..=3 {
            let mut items = Vec::new();
            let mut idx = vec![0usize; samples];
            loop {
                items.push(idx.iter().map(|&i| rows[i].clone()).collect::<Item>());
                let mut d = 0;
                while d < samples {
                    idx[d] += 1;
                    if idx[d] < rows.len() {
                        break;
                    }
                    idx[d] = 0;
                    d += 1;
                }
                if d == samples {
                    break;
                }
            }
            let cube = cube_of_items(&items);
            let got = [
                acquisition::bald(&cube),
                acquisition::max_entropy(&cube),
                acquisition::var_ratios(&cube),
                acquisition::mean_std(&cube),
            ];
            for (n, item) in items.iter().enumerate() {
                let want = [
                    bald_oracle(item),
                    entropy_oracle(&mean_of(item)),
                    var_ratios_oracle(item),
                    mean_std_oracle(item),
                ];
                for (k, name) in ["bald", "max_entropy", "var_ratios", "mean_std"].iter().enumerate() {
                    if (got[k][n] - want[k]).abs() > ORACLE_TOL {
                        return Err(format!(
                            "{name} on {item:?}: estimator {} vs oracle {}",
                            got[k][n], want[k]
                        ));
                    }
                }
                compared += 1;
            }
        }
    }
    Ok(compared)
}

/// Probability vectors of length `classes` with entries in `{0, 1/steps, ..., 1}`.
fn simplex_grid(classes: usize, steps: usize) -> Vec<Vec<f64>> {
    fn rec(left: usize, slots: usize, steps: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if slots == 1 {
            cur.push(left);
            out.push(cur.iter().map(|&k| k as f64 / steps as f64).collect());
            cur.pop();
            return;
        }
        for k in 0..=left {
            cur.push(k);
            rec(left - k, slots - 1, steps, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(steps, classes, steps, &mut Vec::new(), &mut out);
    out
}

/// A random cube whose rows are normalised positive draws, with a share of
/// exact zeros and near-one-hot rows.
pub fn random_cube<R: Rng>(rng: &mut R, samples: usize, items: usize, classes: usize) -> ProbCube {
    let mut probs = Vec::with_capacity(samples * items * classes);
    for _ in 0..samples * items {
        let sharp = rng.random_bool(0.2);
        let mut row: Vec<f64> = (0..classes)
            .map(|_| {
                if rng.random_bool(0.1) {
                    0.0
                } else if sharp {
                    rng.random::<f64>().powi(12)
                } else {
                    rng.random::<f64>()
                }
            })
            .collect();
        let sum: f64 = row.iter().sum();
        if sum == 0.0 {
            row[rng.random_range(0..classes)] = 1.0;
        } else {
            row.iter_mut().for_each(|p| *p /= sum);
        }
        probs.extend(row);
    }
    ProbCube::new(probs, samples, items, classes, mcal_core::infer::CubeMode::Mc).unwrap()
}

/// `0 <= BALD <= MaxEntropy` and class/sample permutation invariance over
/// `cubes` random cubes.
pub fn check_random_invariants(cubes: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = 1e-12;
    for i in 0..cubes {
        let samples = rng.random_range(1..=8);
        let classes = rng.random_range(2..=10);
        let cube = random_cube(&mut rng, samples, 1, classes);
        let b = acquisition::bald(&cube)[0];
        let h = acquisition::max_entropy(&cube)[0];
        if b < -tol || b > h + tol || h > (classes as f64).ln() + tol {
            return Err(format!("cube {i}: bald {b}, entropy {h}, C {classes}"));
        }
        // Reverse sample order and rotate classes.
        let nested: Vec<Vec<Vec<f64>>> = (0..samples)
            .rev()
            .map(|t| {
                let mut row = cube.row(t, 0).to_vec();
                row.rotate_left(1);
                vec![row]
            })
            .collect();
        let permuted = ProbCube::from_nested(&nested).unwrap();
        for (name, f) in scorers() {
            let (x, y) = (f(&cube)[0], f(&permuted)[0]);
            if (x - y).abs() > 1e-12 {
                return Err(format!("cube {i}: {name} not permutation invariant ({x} vs {y})"));
            }
        }
    }
    Ok(())
}

#[allow(clippy::type_complexity)]
pub fn scorers() -> [(&'static str, fn(&ProbCube) -> Vec<f64>); 4] {
    [
        ("bald", acquisition::bald),
        ("max_entropy", acquisition::max_entropy),
        ("var_ratios", acquisition::var_ratios),
        ("mean_std", acquisition::mean_std),
    ]
}

/// Kolmogorov-Smirnov distance of `draws` from Uniform(0, 1).
pub fn ks_uniform(mut draws: Vec<f64>) -> f64 {
    draws.sort_by(f64::total_cmp);
    let n = draws.len() as f64;
    draws
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let lo = x - i as f64 / n;
            let hi = (i + 1) as f64 / n - x;
            lo.max(hi)
        })
        .fold(0.0, f64::max)
}

/// Top-k by brute force: full sort on (score desc, index asc).
pub fn brute_top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

pub fn check_top_k_against_sort(trials: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 0..trials {
        let n = rng.random_range(0..200);
        // Coarse values force many ties.
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..8) as f64 / 8.0).collect();
        let k = rng.random_range(0..=n);
        let got = select_top_k(&scores, k, TieBreak::LowestIndex).map_err(|e| e.to_string())?;
        if got != brute_top_k(&scores, k) {
            return Err(format!("trial {trial}: n {n}, k {k}"));
        }
    }
    Ok(())
}
