//! Command-line definitions. Every [`ExperimentConfig`] field has a flag of
//! the same name in kebab case that overrides the config file.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mcal_core::acquisition::Scorer;
use mcal_core::config::{CubeKind, EvalKind, ExperimentConfig, OracleKind, TaskKind, TiePolicy, WeightDecayMode};
use serde::de::DeserializeOwned;

#[derive(Debug, Parser)]
#[command(name = "mcal", version, about = "Bayesian active learning with MC-dropout CNNs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment for every repeat and write one run log per repeat.
    Run(RunArgs),
    /// Aggregate run logs into curves and summary tables.
    Report(ReportArgs),
    /// Serve the labelling API and client for a query journal.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON file with (a subset of) the experiment configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory of the labelling client served with `--oracle remote`.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
    /// Use double precision for the network.
    #[arg(long)]
    pub f64: bool,
    #[command(flatten)]
    pub overrides: ConfigFlags,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run-log JSON files, or directories searched for them.
    #[arg(required = true)]
    pub logs: Vec<PathBuf>,
    /// Extra error thresholds (fractions) next to 0.10 and 0.05.
    #[arg(long = "threshold")]
    pub thresholds: Vec<f64>,
    /// Labelled-set size for the fixed-budget error table.
    #[arg(long, default_value_t = mcal_core::report::DEFAULT_BUDGET)]
    pub budget: usize,
    /// Directory for summary.txt, summary.json and the curve CSVs.
    #[arg(long, default_value = "report")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// IDX directory the queried indices refer to (the train source).
    #[arg(long)]
    pub data_dir: PathBuf,
    /// Query journal to serve.
    #[arg(long)]
    pub journal: PathBuf,
    #[arg(long, default_value = "mnist")]
    pub experiment_id: String,
    /// Directory of the labelling client.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
    /// Listening port; defaults to ORACLE_PORT, then 8765.
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
}

fn serde_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Debug, Default, Args)]
pub struct ConfigFlags {
    #[arg(long)]
    pub experiment_id: Option<String>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub repeats: Option<usize>,

    /// multiclass | binary
    #[arg(long, value_parser = serde_enum::<TaskKind>)]
    pub task: Option<TaskKind>,
    #[arg(long)]
    pub binary_negative: Option<u8>,
    #[arg(long)]
    pub binary_positive: Option<u8>,
    #[arg(long)]
    pub positive_fraction: Option<f64>,

    #[arg(long)]
    pub initial_train_size: Option<usize>,
    #[arg(long)]
    pub validation_size: Option<usize>,
    #[arg(long)]
    pub balanced: Option<bool>,

    #[arg(long)]
    pub conv_filters: Option<usize>,
    #[arg(long)]
    pub conv_kernel: Option<usize>,
    #[arg(long)]
    pub pool_size: Option<usize>,
    #[arg(long)]
    pub hidden_units: Option<usize>,
    #[arg(long)]
    pub dropout_conv: Option<f64>,
    #[arg(long)]
    pub dropout_dense: Option<f64>,

    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub early_stop_patience: Option<usize>,
    /// rule | grid | fixed
    #[arg(long, value_parser = serde_enum::<WeightDecayMode>)]
    pub weight_decay_mode: Option<WeightDecayMode>,
    #[arg(long)]
    pub weight_decay_value: Option<f64>,
    #[arg(long)]
    pub length_scale_sq: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub weight_decay_grid: Option<Vec<f64>>,

    /// bald | max_entropy | var_ratios | mean_std | random
    #[arg(long)]
    pub scorer: Option<Scorer>,
    #[arg(long)]
    pub acquisition_size: Option<usize>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub mc_samples: Option<usize>,
    /// mc | deterministic
    #[arg(long, value_parser = serde_enum::<CubeKind>)]
    pub cube: Option<CubeKind>,
    /// lowest_index | seeded_shuffle
    #[arg(long, value_parser = serde_enum::<TiePolicy>)]
    pub tie_break: Option<TiePolicy>,
    #[arg(long)]
    pub pool_subsample: Option<usize>,
    /// deterministic | mc
    #[arg(long, value_parser = serde_enum::<EvalKind>)]
    pub eval_mode: Option<EvalKind>,
    #[arg(long)]
    pub eval_mc_samples: Option<usize>,
    #[arg(long)]
    pub dump_scores: Option<bool>,

    /// simulated | remote
    #[arg(long, value_parser = serde_enum::<OracleKind>)]
    pub oracle: Option<OracleKind>,
    #[arg(long)]
    pub oracle_timeout_s: Option<u64>,
}

impl ConfigFlags {
    /// Overwrites the fields of `cfg` whose flag was given.
    pub fn apply(self, cfg: &mut ExperimentConfig) {
        macro_rules! set {
            ($($field:ident),* $(,)?) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        set!(
            experiment_id, data_dir, out, seed, repeats, task, binary_negative, binary_positive,
            initial_train_size, validation_size, balanced, conv_filters, conv_kernel, pool_size,
            hidden_units, dropout_conv, dropout_dense, learning_rate, batch_size, max_epochs,
            early_stop_patience, weight_decay_mode, weight_decay_value, length_scale_sq,
            weight_decay_grid, scorer, acquisition_size, rounds, mc_samples, cube, tie_break,
            eval_mode, eval_mc_samples, dump_scores, oracle, oracle_timeout_s,
        );
        if let Some(v) = self.positive_fraction {
            cfg.positive_fraction = Some(v);
        }
        if let Some(v) = self.pool_subsample {
            cfg.pool_subsample = Some(v);
        }
    }
}
