//! Aggregation of run logs across repeats: mean and standard-deviation
//! learning curves, labels needed to reach error thresholds, and the error
//! at a fixed labelled-set size.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::acquisition::Scorer;
use crate::al_loop::RunLog;
use crate::config::CubeKind;
use crate::error::MetricError;

/// Error thresholds always reported.
pub const DEFAULT_THRESHOLDS: [f64; 2] = [0.10, 0.05];

/// Labelled-set size at which the fixed-budget error is reported.
pub const DEFAULT_BUDGET: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub round: usize,
    pub labeled_size: usize,
    pub mean_error: f64,
    /// Sample standard deviation across repeats; 0 for a single repeat.
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdRow {
    pub target_error: f64,
    /// First labelled-set size at which the mean curve reaches the target.
    pub mean_curve: Option<usize>,
    /// The same quantity for every repeat, in repeat order.
    pub per_repeat: Vec<Option<usize>>,
}

/// One scorer/cube combination of one experiment, aggregated over repeats.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesSummary {
    pub experiment_id: String,
    pub scorer: Scorer,
    pub cube: CubeKind,
    pub repeats: Vec<usize>,
    pub curve: Vec<CurvePoint>,
    pub thresholds: Vec<ThresholdRow>,
    /// Mean and standard deviation of the test error at `budget` labels,
    /// when the runs recorded that size.
    pub error_at_budget: Option<(f64, f64)>,
}

impl SeriesSummary {
    /// Name used in tables and file names, e.g. `mnist_bald` or
    /// `mnist_bald_deterministic`.
    pub fn name(&self) -> String {
        match self.cube {
            CubeKind::Mc => format!("{}_{}", self.experiment_id, self.scorer),
            CubeKind::Deterministic => format!("{}_{}_deterministic", self.experiment_id, self.scorer),
        }
    }

    /// `round,labeled_size,mean_error,std_error` rows.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("round,labeled_size,mean_error,std_error\n");
        for p in &self.curve {
            let _ = writeln!(out, "{},{},{},{}", p.round, p.labeled_size, p.mean_error, p.std_error);
        }
        out
    }

    /// Mean error at the round whose labelled-set size is `labeled_size`.
    pub fn mean_error_at(&self, labeled_size: usize) -> Option<f64> {
        self.curve
            .iter()
            .find(|p| p.labeled_size == labeled_size)
            .map(|p| p.mean_error)
    }

    pub fn threshold(&self, target_error: f64) -> Option<&ThresholdRow> {
        self.thresholds.iter().find(|t| t.target_error == target_error)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub budget: usize,
    pub series: Vec<SeriesSummary>,
}

impl Report {
    /// Aggregates `logs`, which may arrive in any order. Every log must share
    /// the data, task, initial set size and acquisition size; logs of the
    /// same series must also share the number of rounds.
    pub fn build(logs: &[RunLog], extra_thresholds: &[f64], budget: usize) -> Result<Self, MetricError> {
        let first = logs
            .first()
            .ok_or_else(|| MetricError::Undefined("no run logs given".into()))?;
        for log in logs {
            check_compatible(first, log)?;
        }
        let mut thresholds: Vec<f64> = DEFAULT_THRESHOLDS.to_vec();
        for &t in extra_thresholds {
            if !(0.0..=1.0).contains(&t) {
                return Err(MetricError::Undefined(format!("threshold {t} is outside [0, 1]")));
            }
            if !thresholds.contains(&t) {
                thresholds.push(t);
            }
        }
        thresholds.sort_by(|a, b| b.total_cmp(a));

        let mut groups: BTreeMap<(String, &'static str, u8), Vec<&RunLog>> = BTreeMap::new();
        for log in logs {
            let cube = match log.config.cube {
                CubeKind::Mc => 0,
                CubeKind::Deterministic => 1,
            };
            groups
                .entry((log.experiment_id.clone(), log.config.scorer.id(), cube))
                .or_default()
                .push(log);
        }
        let series = groups
            .into_values()
            .map(|mut group| {
                group.sort_by_key(|l| (l.repeat, l.seed));
                summarise(&group, &thresholds, budget)
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { budget, series })
    }

    /// Plain-text tables: labels to reach each threshold, and the error at
    /// the budget.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let width = self.series.iter().map(|s| s.name().len()).max().unwrap_or(0).max(6);
        let thresholds: Vec<f64> = self
            .series
            .first()
            .map(|s| s.thresholds.iter().map(|t| t.target_error).collect())
            .unwrap_or_default();

        let _ = writeln!(out, "Labels needed to reach test error (mean curve)");
        let _ = write!(out, "{:<width$}  repeats", "series");
        for t in &thresholds {
            let _ = write!(out, "  {:>8}", format!("{}%", t * 100.0));
        }
        out.push('\n');
        for s in &self.series {
            let _ = write!(out, "{:<width$}  {:>7}", s.name(), s.repeats.len());
            for row in &s.thresholds {
                let cell = row.mean_curve.map_or("-".to_string(), |n| n.to_string());
                let _ = write!(out, "  {cell:>8}");
            }
            out.push('\n');
        }

        let _ = writeln!(out, "\nTest error at {} labels", self.budget);
        for s in &self.series {
            let cell = s.error_at_budget.map_or("-".to_string(), |(m, sd)| {
                format!("{:.2}% +- {:.2}%", m * 100.0, sd * 100.0)
            });
            let _ = writeln!(out, "{:<width$}  {cell}", s.name());
        }
        out
    }

    /// Writes `summary.txt`, `summary.json` and one `<series>_curve.csv`
    /// per series into `dir`, returning the paths written.
    pub fn write(&self, dir: impl AsRef<Path>) -> std::io::Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let summary = dir.join("summary.txt");
        fs::write(&summary, self.render())?;
        written.push(summary);
        let json = dir.join("summary.json");
        fs::write(&json, serde_json::to_string_pretty(self).expect("report serialises"))?;
        written.push(json);
        for s in &self.series {
            let path = dir.join(format!("{}_curve.csv", s.name()));
            fs::write(&path, s.curve_csv())?;
            written.push(path);
        }
        Ok(written)
    }
}

fn check_compatible(a: &RunLog, b: &RunLog) -> Result<(), MetricError> {
    let mismatch = |what: &str, x: String, y: String| {
        Err(MetricError::Incompatible(format!(
            "{what} differs: {x} in {} vs {y} in {}",
            a.file_stem(),
            b.file_stem()
        )))
    };
    if a.config.acquisition_size != b.config.acquisition_size {
        return mismatch(
            "acquisition size",
            a.config.acquisition_size.to_string(),
            b.config.acquisition_size.to_string(),
        );
    }
    if a.config.initial_train_size != b.config.initial_train_size {
        return mismatch(
            "initial training set size",
            a.config.initial_train_size.to_string(),
            b.config.initial_train_size.to_string(),
        );
    }
    if a.config.task != b.config.task || a.num_classes != b.num_classes {
        return mismatch(
            "task",
            format!("{:?}/{} classes", a.config.task, a.num_classes),
            format!("{:?}/{} classes", b.config.task, b.num_classes),
        );
    }
    if a.config.data_dir != b.config.data_dir
        || a.train_source_size != b.train_source_size
        || a.test_size != b.test_size
    {
        return mismatch(
            "data",
            format!("{} ({}+{})", a.config.data_dir.display(), a.train_source_size, a.test_size),
            format!("{} ({}+{})", b.config.data_dir.display(), b.train_source_size, b.test_size),
        );
    }
    Ok(())
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn summarise(group: &[&RunLog], thresholds: &[f64], budget: usize) -> Result<SeriesSummary, MetricError> {
    let head = group[0];
    for log in group {
        if log.records.len() != head.records.len() {
            return Err(MetricError::Incompatible(format!(
                "{} has {} rounds but {} has {}",
                head.file_stem(),
                head.records.len().saturating_sub(1),
                log.file_stem(),
                log.records.len().saturating_sub(1)
            )));
        }
        for (x, y) in head.records.iter().zip(&log.records) {
            if x.labeled_size != y.labeled_size {
                return Err(MetricError::Incompatible(format!(
                    "round {} has {} labels in {} but {} in {}",
                    x.round,
                    x.labeled_size,
                    head.file_stem(),
                    y.labeled_size,
                    log.file_stem()
                )));
            }
        }
    }

    let curve: Vec<CurvePoint> = head
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let errors: Vec<f64> = group.iter().map(|l| l.records[i].test_error).collect();
            let (mean_error, std_error) = mean_std(&errors);
            CurvePoint {
                round: r.round,
                labeled_size: r.labeled_size,
                mean_error,
                std_error,
            }
        })
        .collect();

    let thresholds = thresholds
        .iter()
        .map(|&target| ThresholdRow {
            target_error: target,
            mean_curve: curve
                .iter()
                .filter(|p| p.mean_error <= target)
                .map(|p| p.labeled_size)
                .min(),
            per_repeat: group
                .iter()
                .map(|l| crate::al_loop::labels_to_reach(l, target))
                .collect(),
        })
        .collect();

    let error_at_budget = curve
        .iter()
        .position(|p| p.labeled_size == budget)
        .map(|i| mean_std(&group.iter().map(|l| l.records[i].test_error).collect::<Vec<_>>()));

    Ok(SeriesSummary {
        experiment_id: head.experiment_id.clone(),
        scorer: head.config.scorer,
        cube: head.config.cube,
        repeats: group.iter().map(|l| l.repeat).collect(),
        curve,
        thresholds,
        error_at_budget,
    })
}
