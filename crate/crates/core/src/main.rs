use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dynanav::cli::{self, Overrides, RunConfig};
use dynanav::sim::SensorFlavor;
use dynanav::tasks::TaskKind;

#[derive(Parser)]
#[command(name = "dynanav", version, about = "Indoor navigation training and evaluation")]
struct Args {
    /// TOML run config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory of the run.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// pointnav, socialnav or interactivenav.
    #[arg(long, global = true)]
    task: Option<TaskKind>,
    /// Pedestrians spawned during training.
    #[arg(long, global = true)]
    peds: Option<usize>,
    /// Augmentations joined by '+' or ',': none, dynamic, crop, cutout.
    #[arg(long, global = true)]
    aug: Option<String>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// scan or clean.
    #[arg(long, global = true)]
    flavor: Option<SensorFlavor>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate scenes, training subsets and episode splits.
    GenScenes,
    /// Train (resumes from the latest checkpoint in the output directory).
    Train,
    /// Select a checkpoint on val1 and report on val2.
    Eval {
        /// Checkpoint file, run directory or directory of seed-* runs.
        target: Option<PathBuf>,
    },
    /// Measure simulator throughput.
    Bench,
    /// Evaluate under both sensor flavors.
    TransferEval {
        checkpoint: Option<PathBuf>,
        /// Train and evaluate every configured augmentation instead.
        #[arg(long)]
        sweep: bool,
    },
}

fn run(args: Args) -> dynanav::Result<()> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: args.seed,
        out: args.out,
        task: args.task,
        peds: args.peds,
        aug: args.aug,
        workers: args.workers,
        flavor: args.flavor,
    })?;
    cfg.validate()?;
    match args.command {
        Command::GenScenes => json(&cli::cmd_gen_scenes(&cfg)?),
        Command::Train => json(&cli::cmd_train(&cfg)?),
        Command::Eval { target } => json(&cli::cmd_eval(&cfg, target.as_deref())?),
        Command::Bench => json(&cli::cmd_bench(&cfg)?),
        Command::TransferEval { sweep: true, .. } => json(&cli::cmd_transfer_sweep(&cfg)?),
        Command::TransferEval { checkpoint: Some(c), .. } => json(&cli::cmd_transfer_eval(&cfg, &c)?),
        Command::TransferEval { .. } => {
            return Err(dynanav::Error::Config("transfer-eval needs a checkpoint or --sweep".into()));
        }
    }
    Ok(())
}

fn json<T: serde::Serialize>(v: &T) {
    match serde_json::to_string_pretty(v) {
        Ok(s) => println!("{s}"),
        Err(e) => log::warn!("cannot print report: {e}"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
