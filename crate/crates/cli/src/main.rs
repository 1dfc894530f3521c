//! `ctxd`: decompose a context corpus, generate filtered synthetic data,
//! distill it into a student, and score predictions.
//!
//! Diagnostics go to stderr; results go only to the files named by flags or
//! by `[paths]` in the config.

mod backends;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ctxd_core::eval::Task;
use ctxd_core::synth::Mode;

use crate::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "ctxd", version, about = "Context distillation toolkit")]
struct Cli {
    /// TOML run configuration; every setting has a default when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides the worker count.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the retail evaluation set.
    Retail {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        count: Option<u64>,
        #[arg(long)]
        first_seed: Option<u64>,
    },
    /// Split a corpus into chunks and decompose them into context units.
    Decompose {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic dataset. Reuses a units file when one is given
    /// or already exists at `paths.units`; otherwise decomposes the corpus.
    Generate {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        units: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// sieve, all-context or seeds-only
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Distill a dataset into a student checkpoint.
    Train {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from this checkpoint instead of a fresh student.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Score predictions from a file, a checkpoint or the configured backend.
    Eval {
        /// retail or translation
        #[arg(long, value_parser = parse_task)]
        task: Option<Task>,
        #[arg(long)]
        eval_set: Option<PathBuf>,
        #[arg(long)]
        references: Option<PathBuf>,
        #[arg(long, conflicts_with = "checkpoint")]
        predictions: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Ask the configured instruct backend instead of reading predictions.
        #[arg(long, conflicts_with_all = ["predictions", "checkpoint"])]
        backend: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_task(s: &str) -> Result<Task, String> {
    match s {
        "retail" => Ok(Task::Retail),
        "translation" => Ok(Task::Translation),
        other => Err(format!("unknown task {other:?}, expected retail or translation")),
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    cfg.apply_overrides();
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Retail { out, count, first_seed } => {
            if let Some(c) = count {
                cfg.retail.count = c;
            }
            if let Some(s) = first_seed {
                cfg.retail.first_seed = s;
            }
            cfg.validate()?;
            commands::retail(&cfg, &config::pick(out, &cfg.paths.eval_set, "eval_set")?)
        }
        Command::Decompose { corpus, out } => commands::decompose(
            &cfg,
            &config::pick(corpus, &cfg.paths.corpus, "corpus")?,
            &config::pick(out, &cfg.paths.units, "units")?,
        ),
        Command::Generate { corpus, units, out, mode, n } => {
            if let Some(m) = mode {
                cfg.pipeline.mode = m;
            }
            if let Some(n) = n {
                cfg.pipeline.n = n;
            }
            cfg.validate()?;
            let units = units.or_else(|| cfg.paths.units.clone().filter(|p| p.exists()));
            let corpus = corpus.or_else(|| cfg.paths.corpus.clone());
            let out = config::pick(out, &cfg.paths.dataset, "dataset")?;
            commands::generate(&cfg, corpus.as_deref(), units.as_deref(), &out)
        }
        Command::Train { dataset, out, init } => commands::train(
            &cfg,
            &config::pick(dataset, &cfg.paths.dataset, "dataset")?,
            &config::pick(out, &cfg.paths.checkpoint, "checkpoint")?,
            init.as_deref(),
        ),
        Command::Eval { task, eval_set, references, predictions, checkpoint, backend, out } => {
            if let Some(t) = task {
                cfg.eval.task = t;
            }
            let source = if backend {
                commands::PredictionSource::Backend
            } else if let Some(c) = checkpoint {
                commands::PredictionSource::Checkpoint(c)
            } else {
                commands::PredictionSource::File(config::pick(predictions, &cfg.paths.predictions, "predictions")?)
            };
            let truths = match cfg.eval.task {
                Task::Retail => config::pick(eval_set, &cfg.paths.eval_set, "eval_set")?,
                Task::Translation => config::pick(references, &cfg.paths.references, "references")?,
            };
            commands::eval(&cfg, &truths, &source, &config::pick(out, &cfg.paths.report, "report")?)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
