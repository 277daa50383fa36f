//! Spread of Monte Carlo BALD estimates as the number of passes grows.

use super::synthetic::{blocks, SIDE};
use mcal_core::acquisition::bald;
use mcal_core::infer::mc_sample;
use mcal_core::nn::{Architecture, ModelState, Shape};

pub const PASSES: [usize; 4] = [10, 40, 160, 640];

pub fn small_net(seed: u64) -> ModelState<f64> {
    let arch = Architecture::conv_net(Shape::new(SIDE, SIDE, 1), 3, 3, 3, 2, 16, (0.25, 0.5));
    ModelState::init(arch, seed).unwrap()
}

/// Least-squares slope of `ys` against `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Log-log slope of the across-seed standard deviation of BALD scores
/// (averaged over items) against the number of passes, using `reps`
/// independent seeds per pass count.
pub fn bald_spread_slope(reps: usize) -> f64 {
    let model = small_net(3);
    let data = blocks(&[4, 4, 4], 1);
    let inputs: Vec<f64> = data.pixels().iter().map(|&p| p as f64).collect();
    let items = data.len();
    let mut log_t = Vec::new();
    let mut log_sd = Vec::new();
    for &t in &PASSES {
        let estimates: Vec<Vec<f64>> = (0..reps)
            .map(|r| bald(&mc_sample(&model, &inputs, t, 1000 + r as u64).unwrap()))
            .collect();
        let mut sd = 0.0;
        for i in 0..items {
            let xs: Vec<f64> = estimates.iter().map(|e| e[i]).collect();
            let m = xs.iter().sum::<f64>() / reps as f64;
            sd += (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (reps - 1) as f64).sqrt();
        }
        log_t.push((t as f64).ln());
        log_sd.push((sd / items as f64).ln());
    }
    slope(&log_t, &log_sd)
}
