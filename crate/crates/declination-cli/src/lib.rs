//! Command-line wiring for the election-asymmetry toolkit: one-off metric
//! evaluation, the batch ingest/impute/report pipeline, and the
//! packing-cracking monotonicity check.
//!
//! Exit codes: 0 on success, 1 when the property check finds a violation,
//! 2 on usage or input errors.

pub mod batch;

use clap::{Parser, Subcommand};
use declination::metrics::Election;
use declination::transforms::{run_theorem_check, TheoremCheckConfig};
use std::fmt;
use std::path::PathBuf;

pub const EXIT_OK: u8 = 0;
pub const EXIT_VIOLATION: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

/// Vote-distribution asymmetry metrics for district-based elections.
#[derive(Debug, Parser)]
#[command(name = "declination", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the full metric set for one election and print it as JSON
    Metrics(MetricsArgs),
    /// Ingest a results CSV, impute uncontested races, and write report
    /// tables, summaries, and diagrams to an output directory
    Batch(batch::BatchArgs),
    /// Run the packing/cracking monotonicity property suite
    TheoremCheck(TheoremArgs),
}

#[derive(Debug, clap::Args)]
pub struct MetricsArgs {
    /// Comma-separated district shares for party P, e.g. 0.42,0.48,0.61
    #[arg(
        long,
        value_delimiter = ',',
        required_unless_present = "input",
        conflicts_with = "input"
    )]
    pub shares: Option<Vec<f64>>,
    /// File of shares separated by whitespace, commas, or newlines
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Gap_tau evaluation points
    #[arg(long, value_delimiter = ',', default_value = "0,0.4,1,2")]
    pub taus: Vec<f64>,
}

#[derive(Debug, clap::Args)]
pub struct TheoremArgs {
    /// Number of random transform trials
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    /// Seed for the election and plan generators
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Gap_tau values whose strict increase is checked
    #[arg(long, value_delimiter = ',', default_value = "0,0.4,1,2,5")]
    pub taus: Vec<f64>,
}

/// Any failure that should end the process with a usage/input exit code.
#[derive(Debug)]
pub struct CliError(pub String);

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn new(message: impl fmt::Display) -> Self {
        Self(message.to_string())
    }
}

/// Dispatches a parsed command line; prints results and returns the exit
/// code.
pub fn run(cli: Cli) -> u8 {
    let outcome = match cli.command {
        Command::Metrics(args) => run_metrics(&args).map(|json| {
            println!("{json}");
            EXIT_OK
        }),
        Command::Batch(args) => batch::run_batch(&args).map(|summary| {
            eprintln!("{summary}");
            EXIT_OK
        }),
        Command::TheoremCheck(args) => run_theorem(&args).map(|(json, passed)| {
            println!("{json}");
            if passed {
                EXIT_OK
            } else {
                EXIT_VIOLATION
            }
        }),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            EXIT_USAGE
        }
    }
}

/// Builds the election from flags and returns the metric set as pretty
/// JSON (undefined metrics are null).
pub fn run_metrics(args: &MetricsArgs) -> Result<String, CliError> {
    let shares = match (&args.shares, &args.input) {
        (Some(shares), _) => shares.clone(),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::new(format!("cannot read {}: {e}", path.display())))?;
            text.split(|c: char| c.is_whitespace() || c == ',')
                .filter(|token| !token.is_empty())
                .map(|token| {
                    token
                        .parse::<f64>()
                        .map_err(|_| CliError::new(format!("bad share value {token:?}")))
                })
                .collect::<Result<Vec<f64>, CliError>>()?
        }
        (None, None) => return Err(CliError::new("provide --shares or --input")),
    };
    let election = Election::from_shares(shares).map_err(CliError::new)?;
    let metrics = election.metric_set(&args.taus).map_err(CliError::new)?;
    serde_json::to_string_pretty(&metrics).map_err(CliError::new)
}

/// Runs the monotonicity suite; returns the JSON report and whether it
/// passed.
pub fn run_theorem(args: &TheoremArgs) -> Result<(String, bool), CliError> {
    let config = TheoremCheckConfig {
        trials: args.trials as usize,
        seed: args.seed,
        taus: args.taus.clone(),
        ..TheoremCheckConfig::default()
    };
    let report = run_theorem_check(&config).map_err(CliError::new)?;
    let json = serde_json::to_string_pretty(&report).map_err(CliError::new)?;
    Ok((json, report.passed()))
}
