use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hawkes_ddp::cli::{run, Command, ExperimentConfig};

#[derive(Parser)]
#[command(name = "hawkes-ddp", version, about = "Bayesian DDP Beta-mixture Hawkes processes")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate datasets for every (ε, replication) pair.
    Simulate(Args),
    /// Fit every dataset with the MCMC sampler.
    FitMcmc(Args),
    /// Fit every dataset with stochastic variational inference.
    FitSvi(Args),
    /// Compute metrics, bands and spectral histograms for the selected fits.
    Evaluate(Args),
    /// Convert a LOBSTER message file into an event sequence.
    Ingest(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Experiment config (JSON) or a manifest written by an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output_dir`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::FitMcmc(a) => (Command::FitMcmc, a),
        Cmd::FitSvi(a) => (Command::FitSvi, a),
        Cmd::Evaluate(a) => (Command::Evaluate, a),
        Cmd::Ingest(a) => (Command::Ingest, a),
    };
    let mut cfg = match ExperimentConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", args.config.display());
            return ExitCode::FAILURE;
        }
    };
    if let Some(o) = args.output {
        cfg.output_dir = o;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    match run(command, &cfg, args.threads) {
        Ok(m) if m.failures.is_empty() => ExitCode::SUCCESS,
        Ok(m) => {
            eprintln!("error: {} job(s) failed", m.failures.len());
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
