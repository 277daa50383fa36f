//! Times training, pool scoring and evaluation for a few rounds on an IDX
//! dataset directory.
//!
//! `cargo run --release -p mcal-core --example round_timing -- <data-dir> [filters] [rounds]`

use std::time::Instant;

use mcal_core::al_loop::{Experiment, TaskData};
use mcal_core::config::ExperimentConfig;
use mcal_core::data::load_mnist_dir;
use mcal_core::oracle::SimulatedOracle;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let dir = args.get(1).map(String::as_str).unwrap_or("data/mnist-desk");
    let filters: usize = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(32);
    let rounds: usize = args.get(3).map(|s| s.parse()).transpose()?.unwrap_or(3);
    let (train, test) = load_mnist_dir(dir)?;
    let cfg = ExperimentConfig {
        conv_filters: filters,
        rounds,
        ..ExperimentConfig::default()
    };
    let data = TaskData::prepare(&train, &test, &cfg, cfg.seed)?;
    let mut oracle = SimulatedOracle::new(&data.train);
    let mut exp = Experiment::<f32>::new(&cfg, &data, 0)?;
    let t = Instant::now();
    let r = exp.initialise(&mut oracle)?;
    println!("round 0: {:.1}s err {:.4} epochs {}", t.elapsed().as_secs_f64(), r.test_error, r.epochs_run);
    for _ in 0..rounds {
        let t = Instant::now();
        let r = exp.run_round(&mut oracle)?;
        println!(
            "round {}: {:.1}s err {:.4} epochs {} labeled {}",
            r.round,
            t.elapsed().as_secs_f64(),
            r.test_error,
            r.epochs_run,
            r.labeled_size
        );
    }
    Ok(())
}
