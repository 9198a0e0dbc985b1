//! Command-line front end: simulate / estimate / diagnose / elasticity /
//! report with reproducible configs and plot-data output.
//!
//! Exit codes: 0 success, 1 estimation/domain failure (structured error
//! written to report.json), 2 usage/config failure.

mod commands;
mod config;
mod plotdata;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Context;
use config::RunConfig;
use donut_rd::error::RdError;

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation or configuration; exit code 2, no partial report.
    Usage(String),
    /// Estimation/domain failure; exit code 1 with a structured report.
    Domain(RdError),
}

impl CliError {
    /// Load-stage errors are usage errors: a missing or malformed input file
    /// should not produce a partial report.
    fn from_load(error: RdError) -> CliError {
        match error {
            RdError::Io(_) | RdError::Csv(_) | RdError::Schema(_) => {
                CliError::Usage(error.to_string())
            }
            other => CliError::Domain(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(error: std::io::Error) -> Self {
        CliError::Domain(RdError::Io(error))
    }
}

#[derive(Parser)]
#[command(name = "donut-rd", about = "Donut fuzzy RD estimation with honest confidence intervals")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, default_value = "out", global = true)]
    out: PathBuf,

    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic cohort and write cohort.csv plus its true estimands.
    Simulate,
    /// First stage, sharp, and fuzzy estimates across the specification grid.
    Estimate,
    /// Placebo thresholds, bandwidth sweep, covariate balance, trend plots.
    Diagnose,
    /// Price elasticity of demand with a bootstrap percentile interval.
    Elasticity,
    /// Run estimate + diagnose + elasticity and write a readable summary.
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let config = match &cli.config {
        Some(path) => match RunConfig::load(path) {
            Ok(config) => config,
            Err(message) => {
                eprintln!("config error: {message}");
                return ExitCode::from(2);
            }
        },
        None => {
            eprintln!("config error: --config PATH is required");
            return ExitCode::from(2);
        }
    };

    let seed = cli.seed.unwrap_or(config.seed);
    let ctx = Context {
        config,
        out_dir: cli.out.clone(),
        seed,
        quiet: cli.quiet,
    };

    let (name, result) = match cli.command {
        Command::Simulate => ("simulate", commands::cmd_simulate(&ctx)),
        Command::Estimate => ("estimate", commands::cmd_estimate(&ctx)),
        Command::Diagnose => ("diagnose", commands::cmd_diagnose(&ctx)),
        Command::Elasticity => ("elasticity", commands::cmd_elasticity(&ctx)),
        Command::Report => ("report", commands::cmd_report(&ctx)),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(message)) => {
            eprintln!("usage error: {message}");
            ExitCode::from(2)
        }
        Err(CliError::Domain(error)) => {
            eprintln!("estimation error: {error}");
            ctx.write_error_report(name, &error);
            ExitCode::from(1)
        }
    }
}
