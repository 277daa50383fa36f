//! The active-learning cycle: acquire from the pool with the current model,
//! reset the network to its initial weights, retrain on the grown labelled
//! set and evaluate.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{select_top_k, write_scores_csv, TieBreak};
use crate::config::{CubeKind, ExperimentConfig, TaskKind, TiePolicy, WeightDecayMode};
use crate::data::{initial_split, make_binary_task, ImageSet};
use crate::error::LoopError;
use crate::infer::{deterministic_probs, evaluate, mc_sample};
use crate::metrics::auc;
use crate::nn::{train, Batch, ModelState, Scalar, Shape};
use crate::oracle::{LoopStatus, Oracle};
use crate::pool::{Acquisition, PoolState};

pub const RUNLOG_FORMAT: &str = "mcal-runlog";
pub const RUNLOG_VERSION: u32 = 1;

/// Independent seed streams derived from one experiment seed.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum SeedPurpose {
    Task = 1,
    Split = 2,
    Init = 3,
    Train = 4,
    Mc = 5,
    Random = 6,
    Tie = 7,
    Subsample = 8,
    Eval = 9,
}

/// SplitMix64 finaliser over `(seed, purpose, round)`.
pub fn derive_seed(seed: u64, purpose: SeedPurpose, round: usize) -> u64 {
    let mut z = seed
        ^ (purpose as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (round as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Result of one round (round 0 is the evaluation before any acquisition).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub labeled_size: usize,
    pub test_error: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub auc: Option<f64>,
    pub val_error: Option<f64>,
    pub weight_decay: f64,
    pub epochs_run: usize,
    pub acquired_indices: Vec<usize>,
    pub acquired_labels: Vec<u8>,
    /// Per-class counts of this round's acquisitions.
    pub acquired_class_counts: Vec<usize>,
    /// Pool points scored this round (smaller than the pool under
    /// subsampling).
    pub scored: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub format: String,
    pub version: u32,
    pub experiment_id: String,
    pub config: ExperimentConfig,
    pub repeat: usize,
    pub seed: u64,
    pub num_classes: usize,
    pub train_source_size: usize,
    pub test_size: usize,
    pub pool_subsample: Option<usize>,
    pub init_digest: String,
    /// Multiplier on the weight-decay rule chosen at round 0.
    pub weight_decay_scale: f64,
    pub initial_labeled: Vec<usize>,
    pub validation: Vec<usize>,
    pub records: Vec<RoundRecord>,
}

impl RunLog {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run log serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, LoopError> {
        let log: Self = serde_json::from_str(text)?;
        if log.format != RUNLOG_FORMAT || log.version != RUNLOG_VERSION {
            return Err(LoopError::Config(format!(
                "unsupported run log {} v{}",
                log.format, log.version
            )));
        }
        Ok(log)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LoopError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| LoopError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// `round,labeled_size,test_error` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("round,labeled_size,test_error\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{}\n", r.round, r.labeled_size, r.test_error));
        }
        out
    }

    /// File stem shared by the JSON and CSV outputs.
    pub fn file_stem(&self) -> String {
        let cube = match self.config.cube {
            CubeKind::Mc => "",
            CubeKind::Deterministic => "_deterministic",
        };
        format!("{}_{}{cube}_r{}", self.experiment_id, self.config.scorer, self.repeat)
    }

    /// Writes `<stem>.json` and `<stem>.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<PathBuf, LoopError> {
        let dir = dir.as_ref();
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| LoopError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let json = dir.join(format!("{}.json", self.file_stem()));
        let tmp = json.with_extension("json.tmp");
        fs::write(&tmp, self.to_json()).map_err(io(&tmp))?;
        fs::rename(&tmp, &json).map_err(io(&json))?;
        let csv = dir.join(format!("{}.csv", self.file_stem()));
        fs::write(&csv, self.to_csv()).map_err(io(&csv))?;
        Ok(json)
    }

    /// The same log with timing fields zeroed, for determinism comparisons.
    pub fn without_timing(&self) -> Self {
        let mut log = self.clone();
        log.records.iter_mut().for_each(|r| r.wall_time_s = 0.0);
        log
    }
}

/// Smallest labelled-set size whose test error is at most `target`.
pub fn labels_to_reach(log: &RunLog, target_error: f64) -> Option<usize> {
    log.records
        .iter()
        .filter(|r| r.test_error <= target_error)
        .map(|r| r.labeled_size)
        .min()
}

/// Cumulative number of class-1 points acquired after each round (entry 0
/// is round 0, always 0).
pub fn positive_acquisition_curve(log: &RunLog) -> Result<Vec<usize>, LoopError> {
    if log.num_classes != 2 {
        return Err(LoopError::Unsupported(format!(
            "positive-acquisition curve needs a binary task, run has {} classes",
            log.num_classes
        )));
    }
    let mut total = 0;
    Ok(log
        .records
        .iter()
        .map(|r| {
            total += r.acquired_labels.iter().filter(|&&l| l == 1).count();
            total
        })
        .collect())
}

/// Train-source and test sets after applying the configured task.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub train: ImageSet,
    pub test: ImageSet,
}

impl TaskData {
    pub fn prepare(train: &ImageSet, test: &ImageSet, cfg: &ExperimentConfig, seed: u64) -> Result<Self, LoopError> {
        match cfg.task {
            TaskKind::Multiclass => Ok(Self {
                train: train.clone(),
                test: test.clone(),
            }),
            TaskKind::Binary => {
                let (a, b) = (cfg.binary_negative as usize, cfg.binary_positive as usize);
                let mut train = make_binary_task(train, a, b)?;
                let test = make_binary_task(test, a, b)?;
                if let Some(f) = cfg.positive_fraction {
                    train = downsample_positives(&train, f, derive_seed(seed, SeedPurpose::Task, 0));
                }
                Ok(Self { train, test })
            }
        }
    }
}

/// Keeps every negative and a uniform subset of positives so that they make
/// up `fraction` of the result.
fn downsample_positives(data: &ImageSet, fraction: f64, seed: u64) -> ImageSet {
    let positives: Vec<usize> = (0..data.len()).filter(|&i| data.label(i) == 1).collect();
    let negatives = data.len() - positives.len();
    let want = ((fraction / (1.0 - fraction)) * negatives as f64).round() as usize;
    let want = want.clamp(1, positives.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = sample(&mut rng, positives.len(), want)
        .into_iter()
        .map(|j| positives[j])
        .collect();
    chosen.sort_unstable();
    let keep: Vec<usize> = (0..data.len())
        .filter(|&i| data.label(i) == 0 || chosen.binary_search(&i).is_ok())
        .collect();
    data.subset(&keep)
}

/// One experiment repeat: data, split, model and log, advanced round by
/// round.
pub struct Experiment<'a, S: Scalar> {
    cfg: &'a ExperimentConfig,
    data: &'a TaskData,
    seed: u64,
    state: PoolState,
    model: ModelState<S>,
    val: Batch<S>,
    test: Batch<S>,
    log: RunLog,
    score_dir: Option<PathBuf>,
}

impl<'a, S: Scalar> Experiment<'a, S> {
    /// Draws the split and initialises the network. No training yet.
    pub fn new(cfg: &'a ExperimentConfig, data: &'a TaskData, repeat: usize) -> Result<Self, LoopError> {
        cfg.validate()?;
        let seed = cfg.repeat_seed(repeat);
        let mut split_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, SeedPurpose::Split, 0));
        let spec = cfg.split_spec(seed);
        let state = initial_split(&data.train, &spec, data.test.len(), &mut split_rng)?;
        if cfg.acquisition_size * cfg.rounds > state.pool().len() {
            return Err(LoopError::Config(format!(
                "rounds: {} rounds of {} exceed the pool of {}",
                cfg.rounds,
                cfg.acquisition_size,
                state.pool().len()
            )));
        }
        let classes = data.train.num_classes();
        let input = Shape::new(data.train.height(), data.train.width(), 1);
        let arch = cfg.architecture(input, classes);
        let model = ModelState::<S>::init(arch, derive_seed(seed, SeedPurpose::Init, 0))?;
        let val = Batch::from_indices(&data.train, state.validation());
        let all_test: Vec<usize> = (0..data.test.len()).collect();
        let test = Batch::from_indices(&data.test, &all_test);
        let log = RunLog {
            format: RUNLOG_FORMAT.into(),
            version: RUNLOG_VERSION,
            experiment_id: cfg.experiment_id.clone(),
            config: cfg.clone(),
            repeat,
            seed,
            num_classes: classes,
            train_source_size: data.train.len(),
            test_size: data.test.len(),
            pool_subsample: cfg.pool_subsample,
            init_digest: model.init_digest(),
            weight_decay_scale: 1.0,
            initial_labeled: state.labeled().to_vec(),
            validation: state.validation().to_vec(),
            records: Vec::new(),
        };
        Ok(Self {
            cfg,
            data,
            seed,
            state,
            model,
            val,
            test,
            log,
            score_dir: None,
        })
    }

    /// Dump per-round acquisition scores as CSV into `dir`.
    pub fn with_score_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.score_dir = Some(dir.into());
        self
    }

    pub fn state(&self) -> &PoolState {
        &self.state
    }

    pub fn model(&self) -> &ModelState<S> {
        &self.model
    }

    pub fn log(&self) -> &RunLog {
        &self.log
    }

    pub fn into_log(self) -> RunLog {
        self.log
    }

    fn weight_decay(&self, n: usize) -> f64 {
        match self.cfg.weight_decay_mode {
            WeightDecayMode::Fixed => self.cfg.weight_decay_value,
            WeightDecayMode::Rule | WeightDecayMode::Grid => {
                self.log.weight_decay_scale * self.cfg.rule_weight_decay(n)
            }
        }
    }

    /// Resets to the initial weights and trains on the current labelled set.
    fn retrain(&mut self, round: usize, weight_decay: f64) -> Result<crate::nn::TrainOutcome, LoopError> {
        self.model.reset_to_init();
        if self.model.weights_digest() != self.log.init_digest {
            return Err(LoopError::Invariant("reset did not restore the initial weights".into()));
        }
        let train_set = Batch::with_labels(
            &self.data.train,
            self.state.labeled(),
            self.state.labeled_labels().to_vec(),
        );
        let mut tc = self.cfg.train_config(derive_seed(self.seed, SeedPurpose::Train, round));
        tc.weight_decay = weight_decay;
        Ok(train(&mut self.model, &train_set, &self.val, &tc)?)
    }

    fn evaluate_record(
        &mut self,
        round: usize,
        weight_decay: f64,
        outcome: &crate::nn::TrainOutcome,
        acquisition: Option<&Acquisition>,
        scored: usize,
        started: Instant,
    ) -> Result<RoundRecord, LoopError> {
        let eval = evaluate(
            &self.model,
            &self.test,
            self.cfg.eval(),
            derive_seed(self.seed, SeedPurpose::Eval, round),
        )?;
        let auc = match eval.positive_scores() {
            Some(scores) => Some(auc(&scores, &self.test.labels).map_err(|e| LoopError::Unsupported(e.to_string()))?),
            None => None,
        };
        let classes = self.log.num_classes;
        let (indices, labels) = acquisition
            .map(|a| (a.indices.clone(), a.labels.clone()))
            .unwrap_or_default();
        let mut counts = vec![0; classes];
        for &l in &labels {
            counts[l as usize] += 1;
        }
        Ok(RoundRecord {
            round,
            labeled_size: self.state.labeled().len(),
            test_error: eval.error,
            auc,
            val_error: outcome.best_val_error,
            weight_decay,
            epochs_run: outcome.epochs_run,
            acquired_indices: indices,
            acquired_labels: labels,
            acquired_class_counts: counts,
            scored,
            wall_time_s: started.elapsed().as_secs_f64(),
        })
    }

    fn status(&self) -> LoopStatus {
        LoopStatus {
            experiment_id: self.log.experiment_id.clone(),
            round: self.log.records.len().saturating_sub(1),
            labeled_size: self.state.labeled().len(),
            last_test_error: self.log.records.last().map(|r| r.test_error),
        }
    }

    /// Round 0: train on the initial set (choosing the weight-decay scale
    /// when grid search is configured) and evaluate.
    pub fn initialise<O: Oracle>(&mut self, oracle: &mut O) -> Result<&RoundRecord, LoopError> {
        if !self.log.records.is_empty() {
            return Err(LoopError::Invariant("round 0 already evaluated".into()));
        }
        let started = Instant::now();
        let n = self.state.labeled().len();
        if self.cfg.weight_decay_mode == WeightDecayMode::Grid {
            let mut best: Option<(f64, f64, ModelState<S>, crate::nn::TrainOutcome)> = None;
            for &m in &self.cfg.weight_decay_grid {
                let outcome = self.retrain(0, m * self.cfg.rule_weight_decay(n))?;
                let err = outcome.best_val_error.unwrap_or(f64::INFINITY);
                if best.as_ref().is_none_or(|(e, ..)| err < *e) {
                    best = Some((err, m, self.model.clone(), outcome));
                }
            }
            let (_, scale, model, outcome) = best.expect("grid is non-empty");
            self.model = model;
            self.log.weight_decay_scale = scale;
            let wd = self.weight_decay(n);
            let record = self.evaluate_record(0, wd, &outcome, None, 0, started)?;
            self.log.records.push(record);
        } else {
            let wd = self.weight_decay(n);
            let outcome = self.retrain(0, wd)?;
            let record = self.evaluate_record(0, wd, &outcome, None, 0, started)?;
            self.log.records.push(record);
        }
        oracle.observe(&self.status());
        Ok(self.log.records.last().expect("just pushed"))
    }

    /// Scores the pool with the current model, returns dataset indices of
    /// the selected batch and the number of points scored.
    fn select(&self, round: usize) -> Result<(Vec<usize>, usize), LoopError> {
        let pool = self.state.pool();
        let k = self.cfg.acquisition_size;
        let candidates: Vec<usize> = match self.cfg.pool_subsample {
            Some(m) if m < pool.len() => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, SeedPurpose::Subsample, round));
                let mut pos = sample(&mut rng, pool.len(), m).into_vec();
                pos.sort_unstable();
                pos.into_iter().map(|j| pool[j]).collect()
            }
            _ => pool.to_vec(),
        };
        if candidates.len() < k {
            return Err(LoopError::Acquisition(crate::error::AcquisitionError::Selection {
                k,
                n: candidates.len(),
            }));
        }
        let inputs = Batch::<S>::from_indices(&self.data.train, &candidates).inputs;
        let cube = match self.cfg.cube {
            CubeKind::Mc => mc_sample(
                &self.model,
                &inputs,
                self.cfg.mc_samples,
                derive_seed(self.seed, SeedPurpose::Mc, round),
            )?,
            CubeKind::Deterministic => deterministic_probs(&self.model, &inputs)?,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, SeedPurpose::Random, round));
        let scores = self.cfg.scorer.score(&cube, &mut rng);
        if let Some(dir) = &self.score_dir {
            let path = dir.join(format!("{}_round{round:03}.csv", self.log.file_stem()));
            let io = |source| LoopError::Io {
                path: path.clone(),
                source,
            };
            fs::create_dir_all(dir).map_err(io)?;
            let file = fs::File::create(&path).map_err(io)?;
            write_scores_csv(std::io::BufWriter::new(file), &candidates, &scores).map_err(io)?;
        }
        let tie = match self.cfg.tie_break {
            TiePolicy::LowestIndex => TieBreak::LowestIndex,
            TiePolicy::SeededShuffle => TieBreak::SeededShuffle {
                seed: derive_seed(self.seed, SeedPurpose::Tie, round),
            },
        };
        let chosen = select_top_k(&scores, k, tie)?;
        Ok((chosen.into_iter().map(|j| candidates[j]).collect(), candidates.len()))
    }

    /// One acquisition round. On any error the pool state, model and log
    /// are left exactly as they were.
    pub fn run_round<O: Oracle>(&mut self, oracle: &mut O) -> Result<&RoundRecord, LoopError> {
        let round = self.log.records.len();
        if round == 0 {
            return Err(LoopError::Invariant("round 0 must be evaluated first".into()));
        }
        let started = Instant::now();
        let saved_state = self.state.clone();
        let saved_model = self.model.clone();
        match self.try_round(round, oracle, started) {
            Ok(record) => {
                self.log.records.push(record);
                oracle.observe(&self.status());
                Ok(self.log.records.last().expect("just pushed"))
            }
            Err(e) => {
                self.state = saved_state;
                self.model = saved_model;
                Err(e)
            }
        }
    }

    fn try_round<O: Oracle>(&mut self, round: usize, oracle: &mut O, started: Instant) -> Result<RoundRecord, LoopError> {
        let (indices, scored) = self.select(round)?;
        let labels = oracle.label(&indices)?;
        if labels.len() != indices.len() {
            return Err(LoopError::Invariant(format!(
                "oracle returned {} labels for {} queries",
                labels.len(),
                indices.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l as usize >= self.log.num_classes) {
            return Err(LoopError::Invariant(format!("oracle label {l} out of range")));
        }
        let acquisition = Acquisition {
            round,
            indices,
            labels,
            scorer: self.cfg.scorer.id().to_string(),
        };
        self.state.acquire(acquisition.clone())?;
        self.state.check_partition()?;
        let wd = self.weight_decay(self.state.labeled().len());
        let outcome = self.retrain(round, wd)?;
        self.evaluate_record(round, wd, &outcome, Some(&acquisition), scored, started)
    }
}

/// Runs round 0 and `cfg.rounds` acquisition rounds for one repeat.
/// `on_round` sees the log after every completed round, so a failure
/// leaves the completed prefix wherever the callback put it.
pub fn run_experiment<S: Scalar, O: Oracle>(
    cfg: &ExperimentConfig,
    data: &TaskData,
    repeat: usize,
    oracle: &mut O,
    mut on_round: impl FnMut(&RunLog) -> Result<(), LoopError>,
) -> Result<(RunLog, PoolState), LoopError> {
    let mut exp = Experiment::<S>::new(cfg, data, repeat)?;
    if cfg.dump_scores {
        exp = exp.with_score_dir(cfg.out.join("scores"));
    }
    exp.initialise(oracle)?;
    on_round(exp.log())?;
    for _ in 0..cfg.rounds {
        exp.run_round(oracle)?;
        on_round(exp.log())?;
    }
    let state = exp.state().clone();
    Ok((exp.into_log(), state))
}
