//! Batch front end for `surfspin`: reads CSV data and TOML configuration,
//! runs the fits and writes JSON results, CSV tables and SVG plots.
//!
//! Exit codes: 0 success, 2 unreadable or malformed input, 3 a fit that
//! failed or did not converge (partial results are still written), 64 usage
//! or configuration errors. With several input files the largest code wins.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
pub mod config;
pub mod output;
pub mod svg;

pub use config::Config;
pub use output::{Envelope, Status};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_FIT: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] surfspin::Error),
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("fit did not converge: {0}")]
    NotConverged(String),
}

impl CliError {
    pub(crate) fn output(path: &Path, source: std::io::Error) -> Self {
        CliError::Write { path: path.to_path_buf(), source }
    }

    pub fn exit_code(&self) -> i32 {
        use surfspin::Error as E;
        match self {
            CliError::Usage(_) | CliError::Config(_) => EXIT_USAGE,
            CliError::Read { .. } | CliError::Write { .. } => EXIT_INPUT,
            CliError::NotConverged(_) => EXIT_FIT,
            CliError::Core(e) => match e {
                E::Fit(_) | E::Numeric(_) | E::Singularity(_) => EXIT_FIT,
                E::Domain(_) | E::Input(_) | E::InvalidRow { .. } | E::Csv { .. } | E::Io(_) | E::Json(_) => {
                    EXIT_INPUT
                }
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "surfspin", version, about = "Fit and simulate surface-spin ESR measurements")]
pub struct Cli {
    /// Configuration file (TOML). Without it, `surfspin.toml` is searched for
    /// in the directories listed in SURFSPIN_CONFIG_PATH.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for output files; defaults to each input's directory.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Skip SVG plots.
    #[arg(long, global = true)]
    pub no_plots: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit f0, Q and complex Qc to S21 traces (f_hz, s21_re, s21_im).
    FitResonance(Inputs),
    /// Fit lines and background to field sweeps (B_tesla, f_hz, q_inv).
    FitSweep(SweepArgs),
    /// Fit g-factors and the hyperfine constant to line positions (f_hz, B_tesla, label).
    FitLevels(Inputs),
    /// Rank spin models and estimate the abundance from peak areas versus temperature.
    FitTemperature(Inputs),
    /// Fit power-saturation curves (p_watt, q_inv).
    FitSaturation(SaturationArgs),
    /// Fit the apparent g-factor versus field angle (theta_deg, g).
    FitAngle(Inputs),
    /// Spin density from a fitted collective coupling.
    SpinDensity(DensityArgs),
    /// Tabulate energy levels and the strongest transitions versus field.
    Levels(LevelsArgs),
    /// Generate a synthetic dataset from a scenario file.
    Simulate(SimulateArgs),
    /// Regenerate saved JSON results and print a summary.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct Inputs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub files: Inputs,
    /// Starting model (JSON spectrum model); built from the spin priors otherwise.
    #[arg(long)]
    pub template: Option<PathBuf>,
    /// Soft-L1 refit after the plain fit.
    #[arg(long)]
    pub robust: bool,
    /// Also fit the frequency-shift channel.
    #[arg(long)]
    pub use_frequency: bool,
    /// Resonator frequency for the built-in template, Hz.
    #[arg(long)]
    pub f0: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SaturationArgs {
    #[command(flatten)]
    pub files: Inputs,
    /// Loaded quality factor.
    #[arg(long)]
    pub q: Option<f64>,
    /// External (coupling) quality factor.
    #[arg(long)]
    pub q_ext: Option<f64>,
    /// Phase memory time for the T1 estimate, s.
    #[arg(long)]
    pub t2e: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DensityArgs {
    /// Collective coupling Ω of the central line, rad/s.
    #[arg(long)]
    pub omega: f64,
    /// Couplings of the hydrogen satellites, rad/s.
    #[arg(long, requires = "omega_sat_high")]
    pub omega_sat_low: Option<f64>,
    #[arg(long, requires = "omega_sat_low")]
    pub omega_sat_high: Option<f64>,
    /// Spin temperature, K.
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Resonator frequency, Hz.
    #[arg(long)]
    pub f0: Option<f64>,
    /// Strip geometry (TOML table with half_gap, width, length, cutoff, impedance).
    #[arg(long)]
    pub geometry: Option<PathBuf>,
    #[arg(short, long, default_value = "density.json")]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SpinChoice {
    Hydrogen,
    Free,
    Triplet,
}

#[derive(Debug, Args)]
pub struct LevelsArgs {
    #[arg(long, value_enum)]
    pub spin: SpinChoice,
    /// Field grid `start:stop:count` in tesla.
    #[arg(long = "B", value_name = "START:STOP:COUNT")]
    pub b: String,
    /// Zero-field splitting of the triplet, Hz.
    #[arg(long, default_value_t = 0.0)]
    pub zfs: f64,
    #[arg(short, long, default_value = "levels.csv")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Overrides the scenario's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Data file; the manifest goes next to it as `<stem>.manifest.json`.
    #[arg(short, long, default_value = "out.csv")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

/// Parses `argv` (program name first) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    match commands::execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("surfspin: error: {e}");
            e.exit_code()
        }
    }
}
