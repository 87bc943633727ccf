//! Command-line front end: run configs, run directories, CSV/JSON outputs.

pub mod commands;
pub mod config;
pub mod report;
pub mod table;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;
pub use report::ExperimentReport;

/// Error surfaced by [`cli_main`]; printed as `error[category]: message`.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] erdecay_core::Error),
    /// A subcommand ran to completion but one of its checks failed.
    #[error("{0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::Core(e) => e.category(),
            CliError::CheckFailed(_) => "check-failed",
        }
    }

    pub fn exit_code(&self) -> i32 {
        use erdecay_core::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::Io(_) | CliError::Core(E::Io(_)) => 4,
            CliError::Core(E::Threshold { .. } | E::Stall(_) | E::Hypothesis { .. }) => 6,
            CliError::Core(_) => 5,
            CliError::CheckFailed(_) => 7,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "erdecay", about = "Decay experiments for variable-exponent power-law fluids")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate u0 and w0, their shell spectra and L1/H1 norms.
    GenInit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Heat oracle and box heat flow of w0 with decay fits.
    HeatBaseline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1e-2)]
        t_min: f64,
        #[arg(long, default_value_t = 1e4)]
        t_max: f64,
        #[arg(long, default_value_t = 121)]
        points: usize,
    },
    /// Evolve both flows and write the ledger, splitting diagnostic and report.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit `value ≈ A (1+t)^slope` to one CSV column.
    FitDecay {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        column: String,
        #[arg(long, default_value = "t")]
        time_column: String,
        #[arg(long)]
        lo: Option<f64>,
        #[arg(long)]
        hi: Option<f64>,
        /// Expected slope; the command fails if the fit misses it by more than `tol`.
        #[arg(long, allow_hyphen_values = true)]
        target: Option<f64>,
        #[arg(long, default_value_t = 0.15)]
        tol: f64,
    },
    /// Exact rate ladder and lower-bound chain.
    BootstrapVerify {
        #[arg(long, default_value = "9/4")]
        gamma: String,
        #[arg(long, default_value = "3")]
        p_minus: String,
        /// Exponent margin used to absorb logarithms.
        #[arg(long)]
        margin: Option<String>,
        /// Prepend the lower-bound chain for the difference to the heat flow.
        #[arg(long)]
        lower_bound: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Property checks on the exponent field, stress law and initial data.
    CheckProps {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Recompute report.json of a run directory from its ledger.
    Report {
        #[arg(long)]
        run: PathBuf,
        /// Exit nonzero when any check fails.
        #[arg(long)]
        strict: bool,
    },
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::GenInit { config, out } => commands::gen_init(&RunConfig::load(&config)?, &out),
        Command::HeatBaseline {
            config,
            out,
            t_min,
            t_max,
            points,
        } => commands::heat_baseline(&RunConfig::load(&config)?, &out, t_min, t_max, points),
        Command::Simulate { config, out } => commands::simulate(&RunConfig::load(&config)?, &out).map(|_| ()),
        Command::FitDecay {
            csv,
            column,
            time_column,
            lo,
            hi,
            target,
            tol,
        } => commands::fit_decay_cmd(&csv, &time_column, &column, lo, hi, target, tol),
        Command::BootstrapVerify {
            gamma,
            p_minus,
            margin,
            lower_bound,
            out,
        } => commands::bootstrap_verify(&gamma, &p_minus, margin.as_deref(), lower_bound, out.as_deref()),
        Command::CheckProps {
            config,
            out,
            samples,
            seed,
        } => commands::check_props(&RunConfig::load(&config)?, out.as_deref(), samples, seed),
        Command::Report { run, strict } => commands::report(&run, strict),
    }
}

/// Runs one invocation and returns the process exit code.
pub fn cli_main<S: Into<OsString> + Clone>(argv: &[S]) -> i32 {
    let cli = match Cli::try_parse_from(argv.iter().cloned()) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return 2;
        }
    };
    match dispatch(cli.cmd) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            e.exit_code()
        }
    }
}
