//! `tox2`: design-time tools for two-cohort toxicity monitoring.

mod commands;
mod design;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Error carrying the process exit status: 2 for usage and validation
/// problems, 1 when a valid request cannot be computed.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<tox2::Error> for CliError {
    fn from(e: tox2::Error) -> Self {
        use tox2::Error::*;
        let code = match e {
            Domain(_) | Config(_) | State(_) | Resource(_) => 2,
            InfeasibleCorrelation { .. } | DegeneratePrior(_) | DegenerateDensity | InfeasibleCalibration { .. } | Quadrature(_) => 1,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::usage(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "tox2", version, about = "Bayesian toxicity monitoring for two-cohort trials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the prior cell counts from means, ESS and correlation.
    Elicit(commands::ElicitArgs),
    /// Cohort-1 stopping boundaries for equal enrollment.
    BoundaryTable(commands::BoundaryArgs),
    /// Replay an event log and report the current decision.
    Decide(commands::DecideArgs),
    /// Exact operating characteristics over a grid of true toxicities.
    Oc(commands::OcArgs),
    /// Smallest cutoff whose cohort-1 type I error meets a target.
    Calibrate(commands::CalibrateArgs),
    /// Monte Carlo operating characteristics next to the exact values.
    Simulate(commands::SimulateArgs),
    /// Run the HTTP JSON API.
    Serve(commands::ServeArgs),
}

const LOG_LEVELS: [&str; 4] = ["error", "warn", "info", "debug"];

fn init_logging() -> Result<(), CliError> {
    let level = match std::env::var("TOX2_LOG_LEVEL") {
        Ok(v) if LOG_LEVELS.contains(&v.as_str()) => v,
        Ok(v) => return Err(CliError::usage(format!("TOX2_LOG_LEVEL must be one of {}, got {v:?}", LOG_LEVELS.join(", ")))),
        Err(_) => "warn".into(),
    };
    env_logger::Builder::new().parse_filters(&level).format_timestamp(None).init();
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_logging()?;
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Elicit(a) => commands::elicit(&a, &mut out),
        Command::BoundaryTable(a) => commands::boundary_table(&a, &mut out),
        Command::Decide(a) => commands::decide(&a, &mut out),
        Command::Oc(a) => commands::oc(&a, &mut out),
        Command::Calibrate(a) => commands::calibrate(&a, &mut out),
        Command::Simulate(a) => commands::simulate(&a, &mut out),
        Command::Serve(a) => commands::serve(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
