//! Shared checks for full active-learning runs on synthetic tasks.

use std::collections::HashSet;

use super::synthetic::acquired;
use mcal_core::al_loop::{run_experiment, RunLog, TaskData};
use mcal_core::config::ExperimentConfig;
use mcal_core::error::OracleError;
use mcal_core::oracle::{Oracle, SimulatedOracle};
use mcal_core::pool::{replay, Acquisition, PoolState};

pub fn run(cfg: &ExperimentConfig, data: &TaskData) -> (RunLog, PoolState) {
    let mut oracle = SimulatedOracle::new(&data.train);
    run_experiment::<f32, _>(cfg, data, 0, &mut oracle, |_| Ok(())).expect("run succeeds")
}

/// Rebuilds the final pool state from nothing but the run log and the
/// dataset labels.
pub fn replay_from_log(log: &RunLog, data: &TaskData) -> PoolState {
    let labeled = log.initial_labeled.clone();
    let labels = data.train.gather_labels(&labeled);
    let taken: HashSet<usize> = labeled.iter().chain(&log.validation).copied().collect();
    let pool = (0..data.train.len()).filter(|i| !taken.contains(i)).collect();
    let initial = PoolState::new(labeled, labels, log.validation.clone(), pool, log.test_size);
    let history: Vec<Acquisition> = log.records[1..]
        .iter()
        .map(|r| Acquisition {
            round: r.round,
            indices: r.acquired_indices.clone(),
            labels: r.acquired_labels.clone(),
            scorer: log.config.scorer.id().to_string(),
        })
        .collect();
    replay(&initial, &history).expect("history replays")
}

pub fn check_run(cfg: &ExperimentConfig, data: &TaskData, log: &RunLog, state: &PoolState) {
    let k = cfg.acquisition_size;
    assert_eq!(log.records.len(), cfg.rounds + 1);
    for (r, rec) in log.records.iter().enumerate() {
        assert_eq!(rec.round, r);
        assert_eq!(rec.labeled_size, cfg.initial_train_size + r * k);
        let expected_k = if r == 0 { 0 } else { k };
        assert_eq!(rec.acquired_indices.len(), expected_k);
        assert_eq!(rec.acquired_labels, data.train.gather_labels(&rec.acquired_indices));
        assert_eq!(rec.acquired_class_counts.iter().sum::<usize>(), expected_k);
        assert!((0.0..=1.0).contains(&rec.test_error));
    }

    // Disjoint partition covering the train source.
    state.check_partition().unwrap();
    let mut all: Vec<usize> = state
        .labeled()
        .iter()
        .chain(state.validation())
        .chain(state.pool())
        .copied()
        .collect();
    all.sort_unstable();
    assert_eq!(all, (0..data.train.len()).collect::<Vec<_>>());

    // No index acquired twice, none taken from the initial or validation sets.
    let got = acquired(log);
    let unique: HashSet<usize> = got.iter().copied().collect();
    assert_eq!(unique.len(), got.len());
    assert!(log.initial_labeled.iter().chain(&log.validation).all(|i| !unique.contains(i)));

    // Replay of the recorded history reproduces the final state.
    assert_eq!(replay(&state.initial(), state.history()).unwrap(), *state);
    assert_eq!(replay_from_log(log, data), *state);
}

/// Ground truth, except that calls listed in `fail_on` return an error or a
/// malformed answer.
pub struct Flaky {
    inner: SimulatedOracle,
    calls: usize,
    fail_on: Vec<usize>,
    failure: Failure,
}

impl Flaky {
    pub fn new(data: &TaskData, fail_on: Vec<usize>, failure: Failure) -> Self {
        Self {
            inner: SimulatedOracle::new(&data.train),
            calls: 0,
            fail_on,
            failure,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Failure {
    Abort,
    ShortAnswer,
    BadLabel,
}

impl Oracle for Flaky {
    fn label(&mut self, indices: &[usize]) -> Result<Vec<u8>, OracleError> {
        let call = self.calls;
        self.calls += 1;
        let mut labels = self.inner.label(indices)?;
        if self.fail_on.contains(&call) {
            match self.failure {
                Failure::Abort => return Err(OracleError::Aborted("operator closed the session".into())),
                Failure::ShortAnswer => {
                    labels.pop();
                }
                Failure::BadLabel => labels[0] = 200,
            }
        }
        Ok(labels)
    }
}
