//! Aggregation of run logs into curves and tables.

mod common;

use common::synthetic::{task, tiny_config};
use mcal_core::acquisition::Scorer;
use mcal_core::al_loop::{run_experiment, RunLog};
use mcal_core::config::{CubeKind, ExperimentConfig};
use mcal_core::error::MetricError;
use mcal_core::oracle::SimulatedOracle;
use mcal_core::report::{Report, DEFAULT_BUDGET};
use proptest::prelude::*;

fn logs(scorer: Scorer, repeats: usize) -> Vec<RunLog> {
    let data = task(3, 14, 0);
    let cfg = ExperimentConfig { scorer, ..tiny_config(3) };
    (0..repeats)
        .map(|r| {
            let mut oracle = SimulatedOracle::new(&data.train);
            run_experiment::<f32, _>(&cfg, &data, r, &mut oracle, |_| Ok(())).unwrap().0
        })
        .collect()
}

/// A log with the given per-round errors and sizes `20 + 10 r`.
fn synthetic_log(template: &RunLog, repeat: usize, errors: &[f64]) -> RunLog {
    let mut log = template.clone();
    log.repeat = repeat;
    log.seed = repeat as u64;
    let mut rec = log.records[0].clone();
    log.records = errors
        .iter()
        .enumerate()
        .map(|(r, &e)| {
            rec.round = r;
            rec.labeled_size = 20 + 10 * r;
            rec.test_error = e;
            rec.clone()
        })
        .collect();
    log
}

#[test]
fn three_repeats_give_one_row_per_round() {
    let logs = logs(Scorer::Bald, 3);
    let report = Report::build(&logs, &[], DEFAULT_BUDGET).unwrap();
    assert_eq!(report.series.len(), 1);
    let s = &report.series[0];
    assert_eq!(s.repeats, vec![0, 1, 2]);
    assert_eq!(s.curve.len(), logs[0].records.len());
    let csv = s.curve_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("round,labeled_size,mean_error,std_error"));
    assert_eq!(lines.count(), logs[0].records.len());
    for (i, p) in s.curve.iter().enumerate() {
        let errors: Vec<f64> = logs.iter().map(|l| l.records[i].test_error).collect();
        let mean = errors.iter().sum::<f64>() / 3.0;
        let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / 2.0;
        assert!((p.mean_error - mean).abs() < 1e-15);
        assert!((p.std_error - var.sqrt()).abs() < 1e-15);
    }
}

#[test]
fn single_log_has_zero_spread() {
    let logs = logs(Scorer::Random, 1);
    let report = Report::build(&logs, &[], DEFAULT_BUDGET).unwrap();
    assert!(report.series[0].curve.iter().all(|p| p.std_error == 0.0));
}

#[test]
fn thresholds_and_budget() {
    let template = &logs(Scorer::Bald, 1)[0];
    let a = synthetic_log(template, 0, &[0.5, 0.2, 0.08, 0.04]);
    let b = synthetic_log(template, 1, &[0.5, 0.1, 0.12, 0.06]);
    let report = Report::build(&[a, b], &[0.3], 40).unwrap();
    let s = &report.series[0];
    let targets: Vec<f64> = s.thresholds.iter().map(|t| t.target_error).collect();
    assert_eq!(targets, vec![0.3, 0.1, 0.05]);
    let ten = s.threshold(0.10).unwrap();
    assert_eq!(ten.mean_curve, Some(40));
    assert_eq!(ten.per_repeat, vec![Some(40), Some(30)]);
    let five = s.threshold(0.05).unwrap();
    assert_eq!(five.mean_curve, Some(50));
    assert_eq!(five.per_repeat, vec![Some(50), None]);
    assert_eq!(s.threshold(0.3).unwrap().mean_curve, Some(30));
    let (mean, sd) = s.error_at_budget.unwrap();
    assert!((mean - 0.10).abs() < 1e-15);
    // Sample standard deviation of {0.08, 0.12}.
    assert!((sd - 0.02 * 2f64.sqrt()).abs() < 1e-12);
    assert_eq!(s.mean_error_at(50), Some(0.05));
    let text = report.render();
    assert!(text.contains("synthetic_bald"));
    assert!(text.contains("10.00% +- 2.83%"), "{text}");
}

#[test]
fn incompatible_logs_are_refused() {
    let base = logs(Scorer::Bald, 1).remove(0);
    let mut other_k = base.clone();
    other_k.config.acquisition_size = 5;
    other_k.repeat = 1;
    let err = Report::build(&[base.clone(), other_k], &[], DEFAULT_BUDGET).unwrap_err();
    assert!(matches!(err, MetricError::Incompatible(ref m) if m.contains("acquisition size")), "{err}");

    let mut other_data = base.clone();
    other_data.train_source_size += 1;
    assert!(matches!(
        Report::build(&[base.clone(), other_data], &[], DEFAULT_BUDGET),
        Err(MetricError::Incompatible(_))
    ));

    let mut short = base.clone();
    short.records.pop();
    short.repeat = 1;
    assert!(matches!(
        Report::build(&[base.clone(), short], &[], DEFAULT_BUDGET),
        Err(MetricError::Incompatible(_))
    ));

    assert!(Report::build(&[], &[], DEFAULT_BUDGET).is_err());
    assert!(Report::build(&[base], &[1.5], DEFAULT_BUDGET).is_err());
}

#[test]
fn series_are_split_by_scorer_and_cube() {
    let mut all = logs(Scorer::Bald, 2);
    all.extend(logs(Scorer::Random, 1));
    let mut det = all[0].clone();
    det.config.cube = CubeKind::Deterministic;
    all.push(det);
    let report = Report::build(&all, &[], DEFAULT_BUDGET).unwrap();
    let names: Vec<String> = report.series.iter().map(|s| s.name()).collect();
    assert_eq!(
        names,
        vec!["synthetic_bald", "synthetic_bald_deterministic", "synthetic_random"]
    );
    let dir = tempfile::tempdir().unwrap();
    let written = report.write(dir.path()).unwrap();
    assert_eq!(written.len(), 2 + 3);
    assert!(dir.path().join("synthetic_bald_curve.csv").exists());
    assert!(dir.path().join("summary.txt").exists());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    #[test]
    fn aggregation_ignores_log_order(
        errors in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 5), 1..6),
        order in prop::collection::vec(any::<prop::sample::Index>(), 12),
    ) {
        let template = &logs(Scorer::MaxEntropy, 1)[0];
        let mut all: Vec<RunLog> = errors
            .iter()
            .enumerate()
            .map(|(r, e)| synthetic_log(template, r, e))
            .collect();
        let mut random = synthetic_log(template, 0, &errors[0]);
        random.config.scorer = Scorer::Random;
        all.push(random);
        let reference = Report::build(&all, &[0.25], DEFAULT_BUDGET).unwrap();
        let mut shuffled = all.clone();
        for (i, idx) in order.iter().enumerate() {
            let n = shuffled.len();
            shuffled.swap(i % n, idx.index(n));
        }
        let permuted = Report::build(&shuffled, &[0.25], DEFAULT_BUDGET).unwrap();
        prop_assert_eq!(reference, permuted);
    }
}
