mod commands;
mod config;
mod dataset;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use inflow_core::Exec;

use crate::config::{RawConfig, RunConfig};
use crate::error::{usage, CliResult};

#[derive(Debug, Parser)]
#[command(name = "inflow", version, about = "Attention-gated normalizing flows for OOD detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Configuration file (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a flow and retain the reference subset for the gate.
    Train(Common),
    /// Gate and score a test set against a trained flow.
    Detect(Common),
    /// Metrics and histograms from score files.
    Eval(Common),
    /// Write a synthetic dataset.
    Gendata(Common),
}

/// Caps the global rayon pool at `INFLOW_THREADS`.
fn configure_threads() -> CliResult<Exec> {
    let Ok(raw) = std::env::var("INFLOW_THREADS") else {
        return Ok(Exec::default());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(format!("INFLOW_THREADS must be a positive integer, got {raw:?}")))?;
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(format!("cannot start {n} threads: {e}")))?;
    }
    Ok(if n == 1 { Exec::Sequential } else { Exec::default() })
}

fn run(cli: Cli) -> CliResult<String> {
    let exec = configure_threads()?;
    let (Command::Train(c) | Command::Detect(c) | Command::Eval(c) | Command::Gendata(c)) = &cli.command;
    let raw = RawConfig::load(&c.config)?;
    let cfg = RunConfig::from_raw(&raw, c.seed, c.out.clone())?;
    match cli.command {
        Command::Train(_) => commands::cmd_train(&cfg, exec),
        Command::Detect(_) => commands::cmd_detect(&cfg, exec),
        Command::Eval(_) => commands::cmd_eval(&cfg),
        Command::Gendata(_) => commands::cmd_gendata(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("inflow: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
