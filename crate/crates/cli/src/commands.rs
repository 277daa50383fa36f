//! Subcommand implementations.

use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use mcal_core::al_loop::{run_experiment, RunLog, TaskData, RUNLOG_FORMAT};
use mcal_core::config::{ExperimentConfig, OracleKind};
use mcal_core::data::load_mnist_dir;
use mcal_core::error::LoopError;
use mcal_core::nn::Scalar;
use mcal_core::oracle::{Oracle, SimulatedOracle};
use mcal_core::report::Report;
use mcal_oracle::{port_from_env, spawn, OracleService, RemoteOracle};

use crate::cli::{ConfigFlags, ReportArgs, RunArgs, ServeArgs};
use crate::error::CliError;

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// The config file (if any) overlaid with flags, validated.
pub fn resolve_config(file: Option<&Path>, overrides: ConfigFlags) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match file {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(io_error(path))?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };
    overrides.apply(&mut cfg);
    cfg.validate().map_err(|e| match e {
        LoopError::Config(msg) => CliError::Usage(msg),
        other => CliError::Loop(other),
    })?;
    Ok(cfg)
}

pub fn run(args: RunArgs) -> Result<(), CliError> {
    let cfg = resolve_config(args.config.as_deref(), args.overrides)?;
    let (train, test) = load_mnist_dir(&cfg.data_dir)?;
    let data = TaskData::prepare(&train, &test, &cfg, cfg.seed)?;
    fs::create_dir_all(&cfg.out).map_err(io_error(&cfg.out))?;

    match cfg.oracle {
        OracleKind::Simulated => {
            let mut oracle = SimulatedOracle::new(&data.train);
            run_repeats(&cfg, &data, &mut oracle, args.f64)
        }
        OracleKind::Remote => {
            let journal = cfg.out.join(format!("{}_queue.jsonl", cfg.experiment_id));
            let service = OracleService::new(&cfg.experiment_id, data.train.clone(), Some(&journal))?;
            let addr = SocketAddr::from(([127, 0, 0, 1], port_from_env()?));
            let server = spawn(service.clone(), addr, args.ui_dir)?;
            eprintln!("oracle listening on http://{}", server.addr());
            let mut oracle = RemoteOracle::new(service, Duration::from_secs(cfg.oracle_timeout_s));
            let result = run_repeats(&cfg, &data, &mut oracle, args.f64);
            server.shutdown()?;
            result
        }
    }
}

fn run_repeats<O: Oracle>(cfg: &ExperimentConfig, data: &TaskData, oracle: &mut O, f64: bool) -> Result<(), CliError> {
    for repeat in 0..cfg.repeats {
        let path = if f64 {
            run_one::<f64, O>(cfg, data, repeat, oracle)?
        } else {
            run_one::<f32, O>(cfg, data, repeat, oracle)?
        };
        println!("{}", path.display());
    }
    Ok(())
}

fn run_one<S: Scalar, O: Oracle>(cfg: &ExperimentConfig, data: &TaskData, repeat: usize, oracle: &mut O) -> Result<PathBuf, CliError> {
    let mut written = None;
    let (log, _) = run_experiment::<S, O>(cfg, data, repeat, oracle, |log| {
        let path = log.write(&cfg.out)?;
        if let Some(r) = log.records.last() {
            eprintln!(
                "[{} repeat {repeat}] round {:>3}  labelled {:>5}  test error {:.4}  ({:.1}s)",
                log.experiment_id, r.round, r.labeled_size, r.test_error, r.wall_time_s
            );
        }
        written = Some(path);
        Ok(())
    })?;
    Ok(written.unwrap_or(log.write(&cfg.out)?))
}

fn is_run_log(text: &str) -> bool {
    serde_json::from_str::<serde_json::Value>(text)
        .ok()
        .and_then(|v| v.get("format").and_then(|f| f.as_str()).map(|f| f == RUNLOG_FORMAT))
        .unwrap_or(false)
}

/// Run logs named on the command line; directories contribute every JSON
/// file in them that is a run log.
pub fn collect_logs(paths: &[PathBuf]) -> Result<Vec<RunLog>, CliError> {
    let mut logs = Vec::new();
    for path in paths {
        if path.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(path)
                .map_err(io_error(path))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            files.sort();
            for file in files {
                let text = fs::read_to_string(&file).map_err(io_error(&file))?;
                if is_run_log(&text) {
                    logs.push(RunLog::from_json(&text)?);
                }
            }
        } else {
            logs.push(RunLog::load(path)?);
        }
    }
    if logs.is_empty() {
        return Err(CliError::Usage("no run logs found".into()));
    }
    Ok(logs)
}

pub fn report(args: ReportArgs) -> Result<(), CliError> {
    let logs = collect_logs(&args.logs)?;
    let report = Report::build(&logs, &args.thresholds, args.budget)?;
    print!("{}", report.render());
    let written = report.write(&args.out).map_err(io_error(&args.out))?;
    for path in written {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

pub fn serve(args: ServeArgs) -> Result<(), CliError> {
    let (train, _) = load_mnist_dir(&args.data_dir)?;
    let service = OracleService::new(&args.experiment_id, train, Some(&args.journal))?;
    let port = match args.port {
        Some(p) => p,
        None => port_from_env()?,
    };
    let addr: SocketAddr = format!("{}:{port}", args.host)
        .parse()
        .map_err(|e| CliError::Usage(format!("host: {e}")))?;
    let server = spawn(service, addr, args.ui_dir)?;
    println!("listening on http://{}", server.addr());
    std::io::stdout().flush().map_err(io_error(Path::new("<stdout>")))?;
    server.wait()?;
    Ok(())
}
