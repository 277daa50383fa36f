//! Small synthetic image tasks and configurations that train in
//! milliseconds.

use mcal_core::al_loop::{RunLog, TaskData};
use mcal_core::config::ExperimentConfig;
use mcal_core::data::{ImageSet, RawImages};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SIDE: usize = 10;

/// Images whose class is marked by a bright 3x3 block at a class-specific
/// position on a noisy background. `counts[c]` items of class `c`, in a
/// seeded shuffled order.
pub fn blocks(counts: &[usize], seed: u64) -> ImageSet {
    let classes = counts.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<u8> = counts
        .iter()
        .enumerate()
        .flat_map(|(c, &n)| std::iter::repeat_n(c as u8, n))
        .collect();
    for i in (1..labels.len()).rev() {
        labels.swap(i, rng.random_range(0..=i));
    }
    let mut pixels = Vec::with_capacity(labels.len() * SIDE * SIDE);
    for &l in &labels {
        let (r0, c0) = (1 + (l as usize * 3) % 7, 1 + (l as usize * 5) % 7);
        for r in 0..SIDE {
            for c in 0..SIDE {
                let on = (r0..r0 + 3).contains(&r) && (c0..c0 + 3).contains(&c);
                let base: f32 = if on { 0.8 } else { 0.0 };
                pixels.push((base + rng.random_range(0.0..0.3f32)).min(1.0));
            }
        }
    }
    let images = RawImages {
        count: labels.len(),
        rows: SIDE,
        cols: SIDE,
        pixels,
    };
    ImageSet::new(images, labels, classes).expect("valid synthetic set")
}

/// Train source of `per_class` items per class and a test set a quarter of
/// that size.
pub fn task(classes: usize, per_class: usize, seed: u64) -> TaskData {
    TaskData {
        train: blocks(&vec![per_class; classes], seed),
        test: blocks(&vec![per_class.div_ceil(4); classes], seed ^ 0x5eed),
    }
}

/// A configuration sized for the synthetic tasks.
pub fn tiny_config(classes: usize) -> ExperimentConfig {
    ExperimentConfig {
        experiment_id: "synthetic".into(),
        conv_filters: 2,
        conv_kernel: 3,
        hidden_units: 8,
        initial_train_size: 2 * classes,
        validation_size: 6,
        learning_rate: 0.1,
        batch_size: 8,
        max_epochs: 4,
        early_stop_patience: 2,
        acquisition_size: 3,
        rounds: 3,
        mc_samples: 4,
        ..ExperimentConfig::default()
    }
}

/// All dataset indices acquired over the run, in acquisition order.
pub fn acquired(log: &RunLog) -> Vec<usize> {
    log.records.iter().flat_map(|r| r.acquired_indices.iter().copied()).collect()
}
