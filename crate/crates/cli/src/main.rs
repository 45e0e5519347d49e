//! `aoii`: optimize, simulate and sweep AoII-minimizing ALOHA policies.
//!
//! Exit codes: 0 success, 1 validation or I/O error, 2 solver failure,
//! 3 sweep finished with failed cells.

mod commands;
mod config;
mod error;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{Benchmark, SimulateArgs};
use crate::config::{extract_overrides, ExperimentConfig};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "aoii",
    version,
    about = "AoII-minimizing transmission policies for slotted ALOHA sensors",
    after_help = "Any config field can be overridden with --section.key=value, e.g. --optim.max_steps=2000.\n\
                  The default output directory is taken from $AOII_OUTPUT_DIR, then ./out."
)]
struct Cli {
    /// TOML experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimize a policy for every (N, p_t) cell of the grid.
    Optimize,
    /// Simulate a policy file or a benchmark policy.
    Simulate {
        /// Policy grid file.
        #[arg(long, conflicts_with = "benchmark")]
        policy: Option<PathBuf>,
        /// pt1, pte:<E> or pte:auto.
        #[arg(long)]
        benchmark: Option<Benchmark>,
        /// Policy whose simulated load sets E for pte:auto.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Also write the running average AoII of every slot.
        #[arg(long)]
        trace: bool,
        /// Result CSV; defaults to simulate.csv in the output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Optimize and simulate every cell against both benchmarks.
    Sweep {
        /// Re-optimize even when a cached policy exists.
        #[arg(long)]
        no_cache: bool,
    },
    /// Render a policy or distribution grid file as SVG.
    Heatmap {
        file: PathBuf,
        #[arg(long)]
        log: bool,
        /// SVG path; defaults to the input with an .svg extension.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the built-in consistency checks.
    Check {
        #[arg(long)]
        quick: bool,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn execute(cli: Cli, overrides: &[(String, String)]) -> Result<(), CliError> {
    let load = || ExperimentConfig::load(cli.config.as_deref(), overrides);
    match cli.command {
        Command::Optimize => commands::optimize(&load()?),
        Command::Simulate { policy, benchmark, reference, trace, output } => {
            commands::simulate(&load()?, &SimulateArgs { policy, benchmark, reference, trace, output })
        }
        Command::Sweep { no_cache } => commands::sweep(&load()?, !no_cache),
        Command::Heatmap { file, log, output } => commands::heatmap(&file, log, output.as_deref()),
        Command::Check { quick, seed } => commands::check(seed, quick),
    }
}

fn main() -> ExitCode {
    let (args, overrides) = extract_overrides(std::env::args());
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
