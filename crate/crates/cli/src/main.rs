//! `shadows`: run, plan and check noisy classical-shadow experiments.
//!
//! JSON results go to stdout or files under `--out`; human-readable summaries go to stderr.

mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use crate::commands::Common;

#[derive(Parser)]
#[command(
    name = "shadows",
    version,
    about = "Classical shadows with noisy measurements"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Directory for output files.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Writes the snapshots of the first trial as JSON lines.
    #[arg(long, global = true, value_name = "PATH")]
    shadows_out: Option<PathBuf>,
    /// Worker threads for snapshot generation (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Median-of-means estimates of observables from simulated noisy shadows.
    Estimate,
    /// Sample-complexity plan for a scenario.
    Plan,
    /// Shadow seminorm of one observable, checked against the brute-force oracle.
    Seminorm,
    /// Runs the identity battery.
    Verify(VerifyArgs),
    /// Shadow parameters and structural predicates of a noise channel.
    ChannelInfo,
}

#[derive(Args)]
struct VerifyArgs {
    /// Haar samples for the qutrit Monte Carlo checks.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    /// Skips the qutrit Monte Carlo checks.
    #[arg(long)]
    skip_monte_carlo: bool,
    /// Random channels per twist-lemma check.
    #[arg(long, default_value_t = 20)]
    lemma_trials: usize,
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    let common = Common {
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
        shadows_out: cli.shadows_out,
    };
    match cli.command {
        Command::Estimate => commands::estimate::run(&common),
        Command::Plan => commands::plan::run(&common),
        Command::Seminorm => commands::seminorm::run(&common),
        Command::Verify(args) => commands::verify::run(
            &common,
            args.samples,
            args.skip_monte_carlo,
            args.lemma_trials,
        ),
        Command::ChannelInfo => commands::channel_info::run(&common),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(failure::exit_code(&e))
        }
    }
}
