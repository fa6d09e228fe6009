//! `jointrec`: synthesize data, train, evaluate, vote and run ablations.
//!
//! Exit codes: 0 success, 2 config schema violation, 3 diverged loss,
//! 4 prediction id-set mismatch, 1 anything else. Failures print one JSON
//! object on a single line to standard error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use jointrec::Split;

use config::{RunConfig, SchemaError};

#[derive(Parser)]
#[command(name = "jointrec", version, about = "Joint emotion and intent recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus (manifest plus feature files).
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model and keep its best checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on one split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Plurality-vote prediction files, best model first.
    Vote {
        #[arg(long = "preds", required = true, num_args = 1..)]
        preds: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "val")]
        split: Split,
        /// Reads the `ensemble` section.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train and evaluate the full model and each single-part ablation.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "test")]
        split: Split,
    },
}

fn load_config(path: &std::path::Path, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    cfg.override_seed(seed);
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { config, out, seed } => {
            let cfg = load_config(&config, seed)?;
            let manifest = commands::synth(&cfg, &out)?;
            println!("{}", manifest.display());
        }
        Command::Train { config, data, out, seed } => {
            let cfg = load_config(&config, seed)?;
            let dataset = commands::load_data(&data)?;
            let history = commands::train_to(&cfg.train_config(), &dataset, &out)?;
            println!("{}", history.display());
        }
        Command::Eval {
            checkpoint,
            data,
            out,
            split,
        } => {
            let dataset = commands::load_data(&data)?;
            let report = commands::eval(&checkpoint, &dataset, split, &out)?;
            println!("jrbm {:.6} f1_emotion {:.6} f1_intent {:.6}", report.jrbm, report.f1_emotion, report.f1_intent);
        }
        Command::Vote {
            preds,
            data,
            out,
            split,
            config,
        } => {
            let greedy = match &config {
                Some(path) => RunConfig::load(path)?.ensemble.greedy,
                None => false,
            };
            let dataset = commands::load_data(&data)?;
            let report = commands::vote(&preds, &dataset, split, greedy, &out)?;
            println!("voted jrbm {:.6}", report.voted_jrbm);
        }
        Command::Ablate {
            config,
            data,
            out,
            seed,
            split,
        } => {
            let cfg = load_config(&config, seed)?;
            let dataset = commands::load_data(&data)?;
            let (ablation, error) = commands::ablate(&cfg, &dataset, split, &out)?;
            print!("{}", ablation.table());
            if let Some(e) = error {
                return Err(e);
            }
        }
    }
    Ok(())
}

/// Error kind name and exit code.
fn classify(err: &anyhow::Error) -> (&'static str, u8) {
    if err.downcast_ref::<SchemaError>().is_some() {
        return ("SchemaViolation", 2);
    }
    match err.downcast_ref::<jointrec::Error>() {
        Some(e @ (jointrec::Error::Config(_) | jointrec::Error::BadSpec(_))) => (e.kind(), 2),
        Some(e @ jointrec::Error::DivergedLoss { .. }) => (e.kind(), 3),
        Some(e @ jointrec::Error::IdSetMismatch(_)) => (e.kind(), 4),
        Some(e) => (e.kind(), 1),
        None => ("Error", 1),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("JOINTREC_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (kind, code) = classify(&err);
            let line = serde_json::json!({
                "error": kind,
                "exit_code": code,
                "message": format!("{err:#}"),
            });
            eprintln!("{line}");
            ExitCode::from(code)
        }
    }
}
