//! Central finite differences against `loss_and_grads`.

use mcal_core::nn::{Architecture, LayerSpec, ModelState, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-4;
pub const REL_TOL: f64 = 1e-3;
/// Entries whose analytic and numeric values are both below this are
/// compared absolutely; the FD truncation error is O(h^2) ~ 1e-8.
pub const ABS_FLOOR: f64 = 1e-6;
/// Central differences at `STEP` and `STEP / 2` agree to O(h^2) on smooth
/// instances; a larger gap means a relu or pool kink lies within one step.
pub const SMOOTHNESS_TOL: f64 = 1e-5;

/// 6x6 miniature of the MNIST network: every layer type appears once
/// or more.
pub fn miniature() -> Architecture {
    Architecture {
        input: Shape::new(6, 6, 1),
        num_classes: 3,
        layers: vec![
            LayerSpec::Conv { filters: 3, kernel: 2 },
            LayerSpec::Relu,
            LayerSpec::Conv { filters: 4, kernel: 2 },
            LayerSpec::Relu,
            LayerSpec::MaxPool { size: 2 },
            LayerSpec::Dropout { rate: 0.25 },
            LayerSpec::Dense { units: 5 },
            LayerSpec::Relu,
            LayerSpec::Dropout { rate: 0.5 },
            LayerSpec::Dense { units: 3 },
            LayerSpec::Softmax,
        ],
    }
}

#[derive(Debug, Clone)]
pub struct Mismatch {
    pub layer: usize,
    pub kind: &'static str,
    pub entry: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Default, Clone)]
pub struct CheckReport {
    pub checked: usize,
    pub max_rel: f64,
    pub mismatches: Vec<Mismatch>,
    /// False when some entry's finite differences change with the step,
    /// i.e. the loss is not differentiable at this scale.
    pub smooth: bool,
}

pub fn relative_error(a: f64, f: f64) -> f64 {
    let scale = a.abs().max(f.abs());
    if scale < ABS_FLOOR {
        (a - f).abs() / ABS_FLOOR
    } else {
        (a - f).abs() / scale
    }
}

/// Checks every weight and bias of a randomly initialised miniature net on
/// a random batch. Masks are fixed by reusing the same rng seed for every
/// loss evaluation.
pub fn check_seed(arch: &Architecture, seed: u64, weight_decay: f64) -> CheckReport {
    let mut model = ModelState::<f64>::init(arch.clone(), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    // Nonzero biases so that relus and pools see generic inputs.
    for p in model.params_mut().iter_mut().flatten() {
        for b in p.bias.iter_mut() {
            *b = rng.random_range(-0.1..0.1);
        }
    }
    let batch = 4;
    let inputs: Vec<f64> = (0..batch * arch.input.len())
        .map(|_| rng.random_range(0.0..1.0))
        .collect();
    let labels: Vec<u8> = (0..batch)
        .map(|_| rng.random_range(0..arch.num_classes) as u8)
        .collect();
    let mask_seed = seed.wrapping_mul(31).wrapping_add(7);
    let loss = |m: &ModelState<f64>| {
        m.loss_and_grads(&inputs, &labels, weight_decay, &mut ChaCha8Rng::seed_from_u64(mask_seed))
            .unwrap()
            .0
    };
    let (_, grads) = model
        .loss_and_grads(&inputs, &labels, weight_decay, &mut ChaCha8Rng::seed_from_u64(mask_seed))
        .unwrap();

    let mut report = CheckReport {
        smooth: true,
        ..CheckReport::default()
    };
    for layer in 0..arch.layers.len() {
        let Some(g) = grads[layer].clone() else { continue };
        for (kind, len) in [("weights", g.weights.len()), ("bias", g.bias.len())] {
            for entry in 0..len {
                let analytic = if kind == "weights" { g.weights[entry] } else { g.bias[entry] };
                let probe = |delta: f64| {
                    let mut m = model.clone();
                    let p = m.params_mut()[layer].as_mut().unwrap();
                    let slot = if kind == "weights" { &mut p.weights[entry] } else { &mut p.bias[entry] };
                    *slot += delta;
                    loss(&m)
                };
                let numeric = (probe(STEP) - probe(-STEP)) / (2.0 * STEP);
                let half = (probe(STEP / 2.0) - probe(-STEP / 2.0)) / STEP;
                if relative_error(numeric, half) > SMOOTHNESS_TOL {
                    report.smooth = false;
                }
                let rel = relative_error(analytic, numeric);
                report.checked += 1;
                report.max_rel = report.max_rel.max(rel);
                if rel >= REL_TOL {
                    report.mismatches.push(Mismatch { layer, kind, entry, analytic, numeric });
                }
            }
        }
    }
    report
}
