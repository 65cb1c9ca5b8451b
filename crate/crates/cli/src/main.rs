//! `ipvrisk`: command-line driver for the risk pipeline.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use commands::Run;

#[derive(Debug, Parser)]
#[command(name = "ipvrisk", version, about = "Recidivism risk models and the stochastic hybrid")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration; every key has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed. Also replaces the generator seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Directory for outputs and manifests.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// Override one config key, e.g. `--set sweep.grid_size=50`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Write a synthetic case table together with the files used to build it.
    Generate,
    /// Fit one model on the training split and save it.
    Train,
    /// Score a saved model (and optional rule systems) on the test split.
    Evaluate,
    /// Exhaustive grid search with rule-system rows for comparison.
    Gridsearch,
    /// k-fold cross-validation over a search space.
    Crossval,
    /// μ sweeps of police protection and resource plus resource profiles.
    Sweep,
    /// Pick μ₀ from a resource curve and a budget r0.
    Decide,
    /// Re-run one model under several High-label thresholds.
    Sensitivity,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::Gridsearch => "gridsearch",
            Command::Crossval => "crossval",
            Command::Sweep => "sweep",
            Command::Decide => "decide",
            Command::Sensitivity => "sensitivity",
        }
    }
}

fn execute(cli: &Cli) -> Result<String> {
    let cfg = config::load(cli.config.as_deref(), cli.seed, &cli.overrides)?;
    let mut run = Run::new(cli.command.name(), cfg, &cli.out_dir, cli.config.as_deref())?;
    let report = match cli.command {
        Command::Generate => commands::generate(&mut run),
        Command::Train => commands::train(&mut run),
        Command::Evaluate => commands::evaluate(&mut run),
        Command::Gridsearch => commands::gridsearch(&mut run),
        Command::Crossval => commands::crossval(&mut run),
        Command::Sweep => commands::sweep(&mut run),
        Command::Decide => commands::decide(&mut run),
        Command::Sensitivity => commands::sensitivity(&mut run),
    }?;
    run.finish()?;
    Ok(report)
}

fn run(cli: &Cli) -> Result<String> {
    match cli.jobs {
        None => execute(cli),
        Some(0) => bail!("--jobs must be at least 1"),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("cannot start worker threads")?
            .install(|| execute(cli)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", config::one_line(&format!("{e:#}")));
            ExitCode::FAILURE
        }
    }
}
