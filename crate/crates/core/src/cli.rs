//! Command-line driver: collect → train → eval → report on one config.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::info;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Config, ConfigError};
use crate::eval::{self, Contender, EvalEpisodeResult, EvalReport, Suite};
use crate::expert::Command;
use crate::net::{write_training_log, NetError};
use crate::pipeline::{
    check_alignment, collect, dataset_path, train_policy, write_collection, Dataset, PipelineError,
    PolicyModel,
};
use crate::plant::{write_trajectory_csv, Gait, Vec2};
use crate::rollout::{run_episode, Conditioning, Controller, Recording, RolloutTuple};

#[derive(Parser, Debug)]
#[command(name = "gaitbc", version, about = "Biped gait expert, behavioral cloning and evaluation")]
pub struct Cli {
    /// JSON config; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overrides the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads, overrides the config. Results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Roll out the expert and write the three aligned datasets. Without --episodes,
    /// one collection covers every grid size.
    Collect {
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write lossless CSV exports.
        #[arg(long)]
        csv: bool,
    },
    /// Train the three policies on the datasets of one size.
    Train {
        #[arg(long)]
        size: usize,
    },
    /// Evaluate all trained models and the expert on one suite.
    Eval {
        #[arg(long)]
        suite: Suite,
    },
    /// Aggregate every existing evaluation into one report.
    Report,
    /// Dump an expert trajectory as CSV.
    Demo {
        #[arg(long)]
        gait: Gait,
        #[arg(long, allow_hyphen_values = true)]
        vd: f64,
        #[arg(long, default_value_t = 3.0)]
        duration: f64,
        /// Switch to this gait for a second segment of equal length.
        #[arg(long)]
        then: Option<Gait>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Collect, train every size, run every suite and report.
    RunAll,
    /// Print the effective config as JSON.
    PrintConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("missing input {path}: {hint}")]
    Missing { path: PathBuf, hint: String },
    #[error(transparent)]
    Data(PipelineError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Other(_) => 1,
            CliError::Config(_) => 3,
            CliError::Missing { .. } => 4,
            CliError::Data(_) => 5,
            CliError::Io { .. } => 6,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn from_pipeline(e: PipelineError, hint: &str) -> CliError {
    match e {
        PipelineError::Io { path, source } if source.kind() == io::ErrorKind::NotFound => {
            CliError::Missing { path, hint: hint.to_string() }
        }
        PipelineError::Io { path, source } => CliError::Io { path, source },
        PipelineError::Config(m) => CliError::Config(ConfigError::Invalid(m)),
        e => CliError::Data(e),
    }
}

pub fn load_config(cli: &Cli) -> Result<Config, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(&cli)?;
    if let Some(w) = cfg.workers {
        // A second initialisation in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
    match cli.command {
        Cmd::Collect { episodes, seed, csv } => cmd_collect(&cfg, episodes, seed, csv),
        Cmd::Train { size } => cmd_train(&cfg, size),
        Cmd::Eval { suite } => cmd_eval(&cfg, suite).map(|_| ()),
        Cmd::Report => cmd_report(&cfg).map(|_| ()),
        Cmd::Demo { gait, vd, duration, then, output } => cmd_demo(&cfg, gait, vd, duration, then, output),
        Cmd::RunAll => run_all(&cfg),
        Cmd::PrintConfig => {
            println!("{}", serde_json::to_string_pretty(&cfg).map_err(|e| CliError::Other(e.to_string()))?);
            Ok(())
        }
    }
}

pub fn cmd_collect(cfg: &Config, episodes: Option<usize>, seed: Option<u64>, csv: bool) -> Result<(), CliError> {
    let seed = seed.unwrap_or(cfg.seeds.collect);
    let sizes = match episodes {
        Some(n) => vec![n],
        None => cfg.grid.dataset_sizes.clone(),
    };
    let max = sizes.iter().copied().max().unwrap_or(0);
    if max == 0 {
        return Err(CliError::Config(ConfigError::Invalid("episode count must be positive".into())));
    }
    info!("collecting {max} expert episodes (seed {seed})");
    let all = collect(max, seed, &cfg.episode());
    info!("{} rows, {} expert episodes excluded", all.manifest.rows, all.manifest.excluded.len());
    for n in sizes {
        let dir = cfg.datasets_dir(n);
        write_collection(&dir, &all.prefix(n), csv).map_err(|e| from_pipeline(e, "cannot write datasets"))?;
        info!("wrote {}", dir.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    size: usize,
    conditioning: Conditioning,
    rows: usize,
    held_out_episodes: Vec<usize>,
    final_train_mse: f64,
    final_held_out_mse: f64,
}

pub fn cmd_train(cfg: &Config, size: usize) -> Result<(), CliError> {
    let dir = cfg.datasets_dir(size);
    let hint = format!("run `gaitbc collect --episodes {size}` first");
    let sets = Conditioning::ALL
        .iter()
        .map(|&c| Dataset::load(&dataset_path(&dir, c)).map_err(|e| from_pipeline(e, &hint)))
        .collect::<Result<Vec<_>, _>>()?;
    check_alignment(&sets.iter().collect::<Vec<_>>()).map_err(CliError::Data)?;
    let out = cfg.models_dir(size);
    fs::create_dir_all(&out).map_err(io_err(&out))?;
    let trained = Conditioning::ALL
        .par_iter()
        .zip(sets.par_iter())
        .map(|(&c, ds)| train_policy(ds, c, &cfg.train).map(|t| (c, ds.len(), t)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| from_pipeline(e, "training failed"))?;
    let mut summaries = Vec::new();
    for (c, rows, t) in trained {
        let p = out.join(format!("{c}.bin"));
        t.model.save(&p).map_err(|e| from_pipeline(e, "cannot write model"))?;
        let lp = out.join(format!("{c}_train.csv"));
        let f = BufWriter::new(File::create(&lp).map_err(io_err(&lp))?);
        write_training_log(f, &t.log).map_err(io_err(&lp))?;
        let last = t.log.last().expect("at least one epoch");
        info!("n{size} {c}: train MSE {:.4}, held-out MSE {:.4}", last.train_mse, last.held_out_mse);
        summaries.push(TrainSummary {
            size,
            conditioning: c,
            rows,
            held_out_episodes: t.held_out_episodes,
            final_train_mse: last.train_mse,
            final_held_out_mse: last.held_out_mse,
        });
    }
    write_json(&out.join("train.json"), &summaries)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Other(e.to_string()))?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

pub fn load_model(cfg: &Config, size: usize, c: Conditioning) -> Result<PolicyModel, CliError> {
    let p = cfg.models_dir(size).join(format!("{c}.bin"));
    let m = PolicyModel::load(&p).map_err(|e| from_pipeline(e, &format!("run `gaitbc train --size {size}` first")))?;
    if m.conditioning != c {
        return Err(CliError::Data(PipelineError::ConditioningMismatch { expected: c, found: m.conditioning }));
    }
    Ok(m)
}

/// Runs one suite over the expert and every model it covers and writes its outputs.
pub fn cmd_eval(cfg: &Config, suite: Suite) -> Result<Vec<EvalEpisodeResult>, CliError> {
    let g = &cfg.grid;
    let cells: Vec<(usize, Conditioning)> = match suite {
        Suite::Single | Suite::Triple => g
            .dataset_sizes
            .iter()
            .flat_map(|&n| Conditioning::ALL.into_iter().map(move |c| (n, c)))
            .collect(),
        Suite::Ood => g.ood_policies.iter().map(|&c| (cfg.ood_dataset_size(), c)).collect(),
    };
    let models = cells
        .iter()
        .map(|&(n, c)| load_model(cfg, n, c).map(|m| (n, m)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut contenders =
        vec![Contender { policy: "expert".into(), dataset_size: None, controller: Controller::Expert }];
    for (n, m) in &models {
        contenders.push(Contender {
            policy: m.conditioning.to_string(),
            dataset_size: Some(*n),
            controller: Controller::Learned(m),
        });
    }
    let ep = cfg.episode();
    let results = match suite {
        Suite::Ood => {
            let mut all = Vec::new();
            for (i, &a) in g.ood_angles_deg.iter().enumerate() {
                info!("ood {a}°");
                all.extend(eval::eval_suite(&contenders, suite, Some((i, a)), g.eval_episodes, cfg.seeds.eval, &ep));
            }
            all
        }
        _ => {
            info!("{suite} batch: {} contenders × {} episodes", contenders.len(), g.eval_episodes);
            eval::eval_suite(&contenders, suite, None, g.eval_episodes, cfg.seeds.eval, &ep)
        }
    };
    let dir = cfg.eval_dir(suite);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let report = EvalReport::aggregate(&results, g.velocity_skip_steps);
    write_eval_outputs(&dir, Some(&results), &report)?;
    Ok(results)
}

fn write_eval_outputs(
    dir: &Path,
    results: Option<&[EvalEpisodeResult]>,
    report: &EvalReport,
) -> Result<(), CliError> {
    let csv_err = |p: &Path, e: csv::Error| CliError::Io { path: p.to_path_buf(), source: io::Error::other(e) };
    if let Some(r) = results {
        let p = dir.join("episodes.csv");
        let f = BufWriter::new(File::create(&p).map_err(io_err(&p))?);
        eval::write_episodes_csv(f, r).map_err(|e| csv_err(&p, e))?;
    }
    let p = dir.join("report.json");
    eval::write_report_json(BufWriter::new(File::create(&p).map_err(io_err(&p))?), report)
        .map_err(io_err(&p))?;
    let p = dir.join("long.csv");
    let f = BufWriter::new(File::create(&p).map_err(io_err(&p))?);
    report.write_long_csv(f).map_err(|e| csv_err(&p, e))?;
    Ok(())
}

/// Re-aggregates every suite's per-episode CSV into `report.json` and `long.csv` at
/// the output root, and prints one line per cell.
pub fn cmd_report(cfg: &Config) -> Result<EvalReport, CliError> {
    let mut all = Vec::new();
    for suite in Suite::ALL {
        let p = cfg.eval_dir(suite).join("episodes.csv");
        if !p.exists() {
            continue;
        }
        let f = File::open(&p).map_err(io_err(&p))?;
        let r = eval::read_episodes_csv(f)
            .map_err(|e| CliError::Io { path: p.clone(), source: io::Error::other(e) })?;
        all.extend(r);
    }
    if all.is_empty() {
        return Err(CliError::Missing {
            path: cfg.output_dir.join("eval"),
            hint: "run `gaitbc eval --suite single` (or triple, ood) first".into(),
        });
    }
    let report = EvalReport::aggregate(&all, cfg.grid.velocity_skip_steps);
    fs::create_dir_all(&cfg.output_dir).map_err(io_err(&cfg.output_dir))?;
    write_eval_outputs(&cfg.output_dir, None, &report)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let _ = writeln!(out, "suite   angle policy  size  fail/100  surv_med  vel_err  vel_x  vel_y  contact");
    for c in &report.cells {
        let f = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.3}"));
        let _ = writeln!(
            out,
            "{:<7} {:>5} {:<7} {:>4}  {:>8.0}  {:>8}  {:>7}  {:>5}  {:>5}  {:>7}",
            c.suite.as_str(),
            c.angle_deg.map_or("-".into(), |a| format!("{a}")),
            c.policy,
            c.dataset_size.map_or("-".into(), |n| n.to_string()),
            c.failures_per_100,
            f(c.survival.map(|q| q.median)),
            f(c.velocity_error.mean),
            f(c.velocity_error_x.mean),
            f(c.velocity_error_y.mean),
            f(c.contact_error.mean),
        );
    }
    Ok(report)
}

pub fn cmd_demo(
    cfg: &Config,
    gait: Gait,
    vd: f64,
    duration: f64,
    then: Option<Gait>,
    output: Option<PathBuf>,
) -> Result<(), CliError> {
    if !(duration > 0.0 && duration.is_finite() && vd.is_finite()) {
        return Err(CliError::Config(ConfigError::Invalid("demo needs finite --vd and positive --duration".into())));
    }
    let cmd = Command { v_d: Vec2::new(vd, 0.0), gait };
    let mut tuples = vec![RolloutTuple { v_d: cmd.v_d, duration, gait }];
    if let Some(g) = then {
        tuples.push(RolloutTuple { v_d: cmd.v_d, duration, gait: g });
    }
    let o = run_episode(&tuples, &Controller::Expert, &cfg.episode(), Recording { samples: false, trajectory: true });
    let path = output.unwrap_or_else(|| {
        let tail = then.map_or(String::new(), |g| format!("_{}", g.as_str()));
        cfg.output_dir.join("demo").join(format!("{}{tail}_vd{vd}.csv", gait.as_str()))
    });
    if let Some(d) = path.parent() {
        fs::create_dir_all(d).map_err(io_err(d))?;
    }
    let f = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
    write_trajectory_csv(f, &o.trajectory).map_err(io_err(&path))?;
    info!(
        "{} ticks, {} steps, {} takeoffs, failure {:?}, wrote {}",
        o.trajectory.len(),
        o.steps.len(),
        o.takeoffs,
        o.failure,
        path.display()
    );
    Ok(())
}

pub fn run_all(cfg: &Config) -> Result<(), CliError> {
    cmd_collect(cfg, None, None, false)?;
    for &n in &cfg.grid.dataset_sizes {
        cmd_train(cfg, n)?;
    }
    for suite in Suite::ALL {
        if suite == Suite::Ood && cfg.grid.ood_angles_deg.is_empty() {
            continue;
        }
        cmd_eval(cfg, suite)?;
    }
    cmd_report(cfg)?;
    Ok(())
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        CliError::Data(PipelineError::Net(e))
    }
}
