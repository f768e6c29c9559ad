//! Command-line front end for turbulence loss and cross-talk statistics.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Error carrying the process exit code.
///
/// 2: invalid input or configuration, 3: numeric failure,
/// 4: degenerate data (no measurable turbulence).
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<turbmode::Error> for CliError {
    fn from(e: turbmode::Error) -> Self {
        use turbmode::Error;
        let code = match e {
            Error::InvalidParameter(_) | Error::Domain(_) | Error::Data(_) => 2,
            Error::Numeric(_) | Error::Accuracy(_) => 3,
            Error::NoMeasurableTurbulence => 4,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args)]
pub struct IoArgs {
    /// JSON configuration file; built-in defaults are used when omitted
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Write output to this file instead of stdout
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,

    /// Output format; tables default to csv, summaries to json
    #[arg(long, value_enum, value_name = "FORMAT")]
    pub format: Option<Format>,
}

#[derive(Parser)]
#[command(
    name = "turbmode",
    version,
    about = "Turbulence-induced loss and modal cross-talk statistics for optical links"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print distortion-coefficient variances and derived constants
    Variances {
        #[command(flatten)]
        io: IoArgs,
    },
    /// Tabulate an analytic transmittance or cross-talk density
    Pdf {
        #[command(flatten)]
        io: IoArgs,
    },
    /// Monte Carlo histogram of the fundamental-mode transmittance
    Simulate {
        #[command(flatten)]
        io: IoArgs,
        /// Override the seed from the configuration
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the raw samples, one value per line
        #[arg(long, value_name = "PATH")]
        raw_out: Option<PathBuf>,
    },
    /// Monte Carlo histograms of cross-talk into higher mode groups
    Crosstalk {
        #[command(flatten)]
        io: IoArgs,
        /// Override the seed from the configuration
        #[arg(long)]
        seed: Option<u64>,
        /// Also write raw samples per level (suffixed `.levelN`)
        #[arg(long, value_name = "PATH")]
        raw_out: Option<PathBuf>,
    },
    /// Estimate the Fried parameter from a measured transmittance trace
    #[command(name = "estimate-r0")]
    EstimateR0 {
        /// CSV input: one transmittance per line, or time,transmittance
        input: PathBuf,
        #[command(flatten)]
        io: IoArgs,
    },
}

/// Apply the `TURBMODE_THREADS` override before any parallel work starts.
fn configure_threads() -> Result<(), CliError> {
    let Some(raw) = std::env::var_os("TURBMODE_THREADS") else {
        return Ok(());
    };
    let text = raw.to_string_lossy();
    let n: usize = text
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            CliError::input(format!(
                "TURBMODE_THREADS must be a positive integer, got '{text}'"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::input(format!("cannot configure thread pool: {e}")))
}

fn run() -> Result<(), CliError> {
    configure_threads()?;
    let cli = Cli::parse();
    match &cli.command {
        Command::Variances { io } => commands::variances(io),
        Command::Pdf { io } => commands::pdf(io),
        Command::Simulate { io, seed, raw_out } => commands::simulate(io, *seed, raw_out),
        Command::Crosstalk { io, seed, raw_out } => commands::crosstalk(io, *seed, raw_out),
        Command::EstimateR0 { input, io } => commands::estimate(input, io),
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {}", e.message);
        std::process::exit(e.code as i32);
    }
}
