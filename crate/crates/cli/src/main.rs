mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{CommandKind, Config, Overrides};
use error::CliError;

/// SOL-HMC sampling and diagnostics for path measures on a Brownian bridge.
#[derive(Debug, Parser)]
#[command(name = "solhmc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one chain and write its per-step trace.
    Sample(RunArgs),
    /// E(n) curves for MALA, HMC and single-step SOL-HMC.
    Fig1(RunArgs),
    /// E(n) curves for HMC and multi-step SOL-HMC at iota = 2^-1/2.
    Fig2(RunArgs),
    /// Compare chain interpolants with the limiting SDE down a delta ladder.
    DiffusionLimit(RunArgs),
    /// Mean rejection probability against delta.
    Scaling(RunArgs),
    /// Per-mode variances of chain and SDE against the reference measure.
    Invariance(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML config, or a manifest written by an earlier run.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output file (a directory for fig1 and fig2).
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Independent seeds averaged in the figure commands.
    #[arg(long, value_name = "K")]
    seeds: Option<usize>,
    /// Larger discretization and run length for the figure commands.
    #[arg(long)]
    full: bool,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (kind, args) = match cli.command {
        Command::Sample(a) => (CommandKind::Sample, a),
        Command::Fig1(a) => (CommandKind::Fig1, a),
        Command::Fig2(a) => (CommandKind::Fig2, a),
        Command::DiffusionLimit(a) => (CommandKind::DiffusionLimit, a),
        Command::Scaling(a) => (CommandKind::Scaling, a),
        Command::Invariance(a) => (CommandKind::Invariance, a),
    };
    let flags = Overrides {
        seed: args.seed,
        seeds: args.seeds,
        full: args.full,
    };
    let config = Config::load(kind, args.config.as_deref(), &flags)?;
    match kind {
        CommandKind::Sample => commands::sample(&config, &args.out),
        CommandKind::Fig1 | CommandKind::Fig2 => commands::figure(kind, &config, &args.out),
        CommandKind::DiffusionLimit => commands::diffusion_limit(&config, &args.out),
        CommandKind::Scaling => commands::scaling(&config, &args.out),
        CommandKind::Invariance => commands::invariance(&config, &args.out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("solhmc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
