//! `bathsmith`: correlation functions, coarse-grained environments, chain maps and
//! absorption spectra from the command line.
//!
//! Exit codes: 0 success, 2 usage, 3 input validation, 4 numeric failure.

mod commands;
mod error;
mod output;
mod plot;
mod scenario;

use bathsmith_core::coarsegrain::{PeakCount, DEFAULT_SEED};
use clap::{Args, Parser, Subcommand};
use error::CliError;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "bathsmith", version, about = "Structured harmonic environments: correlation functions, coarse-graining, chain maps and absorption")]
pub struct Cli {
    /// Worker threads for ensembles and fit multi-starts (default: logical cores).
    #[arg(long, global = true, value_parser = positive_usize)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bath correlation function, filtered spectrum and peak census.
    Bcf(BcfArgs),
    /// Fit an effective few-Lorentzian environment.
    Fit(FitArgs),
    /// Replace all discrete structure by one broad Lorentzian.
    Conventional(ConventionalArgs),
    /// Chain coefficients, star modes and the chain's correlation function.
    Chain(ChainArgs),
    /// Absorption spectra from a scenario file.
    Absorb(AbsorbArgs),
    /// Auxiliary-operator counts and memory of a hierarchical equations of motion run.
    HeomCost(HeomCostArgs),
    /// Correlation distance and monomer-spectrum overlap of two environments.
    Compare(CompareArgs),
    /// Peak census of the filtered spectrum.
    Peaks(PeaksArgs),
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long, default_value = "bathsmith-out")]
    pub out: PathBuf,
    /// Write an SVG plot next to each CSV.
    #[arg(long)]
    pub plot: bool,
}

#[derive(Debug, Args)]
pub struct BathArgs {
    /// Temperature, K.
    #[arg(long = "temp", value_parser = non_negative)]
    pub temperature: f64,
    /// Horizon, fs.
    #[arg(long, value_parser = positive)]
    pub tau: f64,
    /// Filter width, fs (default tau/3).
    #[arg(long, value_parser = positive)]
    pub sigma: Option<f64>,
    /// Time step, fs.
    #[arg(long, value_parser = positive)]
    pub dt: Option<f64>,
    /// Last time of the grid, fs (default 4 tau).
    #[arg(long, value_parser = positive)]
    pub t_max: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BcfArgs {
    /// Model file (JSON or mode-table CSV) or bundled:<name>.
    pub model: String,
    #[command(flatten)]
    pub bath: BathArgs,
    /// Prominence threshold as a fraction of the maximum.
    #[arg(long, value_parser = positive, default_value_t = bathsmith_core::bcf::DEFAULT_PROMINENCE)]
    pub prominence: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    pub model: String,
    #[arg(long = "temp", value_parser = non_negative)]
    pub temperature: f64,
    #[arg(long, value_parser = positive)]
    pub tau: f64,
    /// Number of Lorentzians, or `auto` for the peak census count.
    #[arg(long, value_parser = peak_count, default_value = "auto")]
    pub peaks: PeakCount,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, value_parser = positive_usize, default_value_t = 16)]
    pub starts: usize,
    /// Fit the continuum together with the peaks instead of keeping it.
    #[arg(long)]
    pub fit_continuum: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ConventionalArgs {
    pub model: String,
    /// Centre of the replacement Lorentzian, cm-1.
    #[arg(long, value_parser = positive, default_value_t = 1000.0)]
    pub omega: f64,
    /// Width of the replacement Lorentzian, cm-1 (default: a 20 fs decay).
    #[arg(long, value_parser = positive)]
    pub gamma: Option<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ChainArgs {
    pub model: String,
    #[arg(long = "temp", value_parser = non_negative)]
    pub temperature: f64,
    /// Frequency support of the thermalized density, "lo,hi" in cm-1.
    #[arg(long, value_parser = support, default_value = "-2000,3000", allow_hyphen_values = true)]
    pub support: (f64, f64),
    /// Fixed chain length.
    #[arg(long, value_parser = positive_usize, conflicts_with = "horizon", required_unless_present = "horizon")]
    pub length: Option<usize>,
    /// Pick the shortest chain accurate up to this time, fs.
    #[arg(long, value_parser = positive)]
    pub horizon: Option<f64>,
    /// Distance tolerance of the horizon search.
    #[arg(long, value_parser = positive, default_value_t = 0.05)]
    pub tol: f64,
    /// Time step of the written correlation function, fs.
    #[arg(long, value_parser = positive, default_value_t = 0.25)]
    pub dt: f64,
    /// Last time of the written correlation function, fs.
    #[arg(long, value_parser = positive, default_value_t = 300.0)]
    pub t_max: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct AbsorbArgs {
    /// Scenario file (JSON).
    pub scenario: String,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Override the number of disorder samples.
    #[arg(long, value_parser = positive_usize)]
    pub samples: Option<usize>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct HeomCostArgs {
    /// Sites: a value, a comma list or lo..hi.
    #[arg(long = "N", visible_alias = "sites")]
    pub sites: String,
    /// Lorentzians per site.
    #[arg(long = "M", visible_alias = "lorentzians")]
    pub lorentzians: String,
    /// Hierarchy depth.
    #[arg(long = "L", visible_alias = "depth")]
    pub depth: String,
    /// Complex entries per auxiliary operator (default: one per site).
    #[arg(long)]
    pub block: Option<u64>,
    #[arg(long, default_value_t = 16)]
    pub bytes_per_entry: u64,
    #[arg(long, default_value = "bathsmith-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub first: String,
    pub second: String,
    #[arg(long = "temp", value_parser = non_negative)]
    pub temperature: f64,
    #[arg(long, value_parser = positive, default_value_t = 300.0)]
    pub tau: f64,
    /// Monomer transition energy, cm-1.
    #[arg(long, value_parser = positive, default_value_t = 12_300.0)]
    pub energy: f64,
    /// Gaussian window of the monomer spectra, fs.
    #[arg(long, value_parser = positive, default_value_t = 100.0)]
    pub window: f64,
    /// Half-width of the spectrum grid around the transition, cm-1.
    #[arg(long, value_parser = positive, default_value_t = 2500.0)]
    pub span: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct PeaksArgs {
    pub model: String,
    #[arg(long = "temp", value_parser = non_negative)]
    pub temperature: f64,
    #[arg(long, value_parser = positive)]
    pub tau: f64,
    #[arg(long, value_parser = positive, default_value_t = bathsmith_core::bcf::DEFAULT_PROMINENCE)]
    pub prominence: f64,
    /// Report only peaks at or above this frequency, cm-1.
    #[arg(long, default_value_t = 0.0)]
    pub above: f64,
    #[arg(long, default_value = "bathsmith-out")]
    pub out: PathBuf,
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got {s:?}")),
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a non-negative number, got {s:?}")),
    }
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(format!("expected a positive integer, got {s:?}")),
    }
}

fn peak_count(s: &str) -> Result<PeakCount, String> {
    s.parse().map_err(|e: bathsmith_core::Error| e.to_string())
}

fn support(s: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if let [a, b] = parts[..] {
        if let (Ok(a), Ok(b)) = (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
            if a < b && a.is_finite() && b.is_finite() {
                return Ok((a, b));
            }
        }
    }
    Err(format!("expected \"lo,hi\" with lo < hi, got {s:?}"))
}

fn main() {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            std::process::exit(4);
        }
    }
    if let Err(e) = commands::run(cli.command) {
        let kind = match e {
            CliError::Usage(_) => "usage",
            CliError::Input(_) => "input",
            CliError::Numeric(_) => "numeric",
        };
        eprintln!("error ({kind}): {e}");
        std::process::exit(e.exit_code());
    }
}
