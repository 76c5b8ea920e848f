//! `zerorate` batch front end.
//!
//! Exit codes: 2 for unreadable or malformed input, 3 for numerical
//! failures, 4 for invalid configurations.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use zerorate::Error;

use settings::{Flags, Settings};

#[derive(Debug, Parser)]
#[command(name = "zerorate", version, about = "Zero-rate model pricing, calibration and risk")]
struct Cli {
    /// Flat `key = value` config file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker thread cap for the engines.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Bootstrap a discount curve and report discount factors and par rates.
    Bootstrap(Flags),
    /// Calibrate the model vol surface to swaption quotes.
    Calibrate(Flags),
    /// Price a deal document.
    Price(Flags),
    /// Bucket vegas of a deal against the swaption quotes.
    Vega(Flags),
    /// Simulate the Monte Carlo field and report the martingale check.
    Simulate(Flags),
}

fn exit_code(e: &Error) -> u8 {
    if e.is_parse() {
        2
    } else if e.is_numerical() {
        3
    } else {
        4
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    }
    let config = cli.config.as_deref().map(zerorate::io::read_to_string).transpose()?;
    let (flags, run): (&Flags, fn(&Settings) -> Result<(), Error>) = match &cli.command {
        Command::Bootstrap(f) => (f, commands::bootstrap),
        Command::Calibrate(f) => (f, commands::calibrate_cmd),
        Command::Price(f) => (f, commands::price),
        Command::Vega(f) => (f, commands::vega),
        Command::Simulate(f) => (f, commands::simulate_cmd),
    };
    let settings = Settings::resolve(config.as_deref(), flags)?;
    run(&settings)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("zerorate: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
