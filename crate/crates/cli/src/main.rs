mod commands;
mod config;
mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eapred::exec::Execution;
use eapred::models::ModelKind;
use eapred::training::Optimizer;

use crate::commands::Context;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult, Kind};

/// Earnings-announcement direction prediction.
#[derive(Parser, Debug)]
#[command(name = "eapred", version, about)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory that receives run directories.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct DataArgs {
    /// Raw input directory (prices.csv, fundamentals.csv, news.jsonl, events.csv).
    #[arg(long, conflicts_with_all = ["store", "synthetic"])]
    data: Option<PathBuf>,
    /// Dataset store written by `ingest` or `synth`.
    #[arg(long, conflicts_with = "synthetic")]
    store: Option<PathBuf>,
    /// Use generated data.
    #[arg(long)]
    synthetic: bool,
    /// Number of generated firms.
    #[arg(long)]
    firms: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct TrainArgs {
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Write a checkpoint every N epochs (0: final model only).
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// `adam` or `lbfgs` (LogReg only).
    #[arg(long, value_parser = parse_optimizer)]
    optimizer: Option<Optimizer>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset store.
    Synth {
        #[arg(long)]
        firms: Option<usize>,
        /// Probability that the news tone agrees with the move.
        #[arg(long)]
        fidelity: Option<f64>,
    },
    /// Validate raw files (or generate data) and write a dataset store.
    Ingest {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Label events, build and standardize windows, write window stores.
    Prepare {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        window_len: Option<usize>,
    },
    /// Train one model on a prepared directory.
    Train {
        /// Run directory written by `prepare`.
        #[arg(long)]
        prepared: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
        /// Drop the sentiment block (d = 18).
        #[arg(long)]
        no_sentiment: bool,
    },
    /// Evaluate a checkpoint on one split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        prepared: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Train and evaluate with and without sentiment, then compare.
    Ablate {
        #[arg(long)]
        prepared: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Finite-difference gradient checks for all three models.
    Gradcheck {
        /// Also check default-size models on N sampled coordinates per tensor.
        #[arg(long, value_name = "N")]
        full: Option<usize>,
    },
}

fn parse_optimizer(s: &str) -> Result<Optimizer, String> {
    match s.to_ascii_lowercase().as_str() {
        "adam" => Ok(Optimizer::Adam),
        "lbfgs" | "l-bfgs" => Ok(Optimizer::Lbfgs),
        _ => Err(format!("unknown optimizer {s:?}")),
    }
}

fn apply_data(cfg: &mut RunConfig, a: &DataArgs) {
    if a.data.is_some() || a.store.is_some() || a.synthetic {
        cfg.data = Default::default();
    }
    if let Some(d) = &a.data {
        cfg.data.dir = Some(d.clone());
    }
    if let Some(s) = &a.store {
        cfg.data.store = Some(s.clone());
    }
    if a.synthetic || (a.firms.is_some() && cfg.data.synthetic.is_none() && cfg.data.dir.is_none() && cfg.data.store.is_none()) {
        cfg.data.synthetic.get_or_insert_with(Default::default);
    }
    if let (Some(n), Some(spec)) = (a.firms, cfg.data.synthetic.as_mut()) {
        spec.firms = n;
    }
}

fn apply_train(cfg: &mut RunConfig, a: &TrainArgs) {
    if let Some(m) = a.model {
        cfg.model = m;
    }
    if let Some(v) = a.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = a.lr {
        cfg.train.learning_rate = v;
    }
    if let Some(v) = a.checkpoint_every {
        cfg.train.checkpoint_every = v;
    }
    if let Some(v) = a.optimizer {
        cfg.train.optimizer = v;
    }
}

fn execute(cli: Cli) -> CliResult<PathBuf> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(out) = cli.out {
        cfg.output_dir = out;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match &cli.command {
        Command::Synth { firms, fidelity } => {
            let spec = cfg.data.synthetic.get_or_insert_with(Default::default);
            if let Some(n) = firms {
                spec.firms = *n;
            }
            if let Some(f) = fidelity {
                spec.sentiment_fidelity = *f;
            }
        }
        Command::Ingest { data } => apply_data(&mut cfg, data),
        Command::Prepare { data, tau, window_len } => {
            apply_data(&mut cfg, data);
            if let Some(t) = tau {
                cfg.tau = *t;
            }
            if let Some(w) = window_len {
                cfg.window_len = *w;
            }
        }
        Command::Train { train, no_sentiment, .. } => {
            apply_train(&mut cfg, train);
            if *no_sentiment {
                cfg.sentiment = false;
            }
        }
        Command::Ablate { train, .. } => apply_train(&mut cfg, train),
        Command::Evaluate { .. } | Command::Gradcheck { .. } => {}
    }
    cfg.validate()?;
    if let Some(spec) = &cfg.data.synthetic {
        spec.validate().map_err(|e| CliError::new(Kind::Config, e.to_string()))?;
    }
    let ctx = Context {
        cfg,
        exec: if cli.sequential { Execution::Sequential } else { Execution::Parallel },
    };
    match cli.command {
        Command::Synth { .. } => commands::synth(&ctx),
        Command::Ingest { .. } => commands::ingest_cmd(&ctx),
        Command::Prepare { .. } => commands::prepare(&ctx),
        Command::Train { prepared, .. } => commands::train(&ctx, &prepared),
        Command::Evaluate { checkpoint, prepared, split } => commands::evaluate_cmd(&ctx, &checkpoint, &prepared, &split),
        Command::Ablate { prepared, .. } => commands::ablate(&ctx, &prepared),
        Command::Gradcheck { full } => commands::gradcheck(&ctx, full),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(Kind::Config.exit_code() as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(dir) => {
            println!("run directory: {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind.exit_code() as u8)
        }
    }
}
