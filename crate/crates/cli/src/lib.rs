//! Command-line front end: argument parsing, configuration layering and the
//! subcommands `nf`, `continue`, `stability`, `evolve`, `wavenumber` and
//! `maxwell`.

pub mod axes;
pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::run;
pub use config::ExperimentConfig;

/// Usage problems (exit code 2) versus failures while running (exit code 1).
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0:#}")]
    Usage(anyhow::Error),
    #[error("{0:#}")]
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<esh_core::Error> for CliError {
    fn from(e: esh_core::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

#[derive(Debug, Parser)]
#[command(name = "esh", version, about = "Localised states of the extended Swift-Hohenberg equation")]
pub struct Cli {
    /// TOML configuration file; flags take precedence over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normal-form coefficients at onset, or q2/q4 sampled over a slice.
    Nf(NfArgs),
    /// Continue L0/L1 branches of localised states in r.
    Continue(ContinueArgs),
    /// Spectrum of a saved profile, or stability annotation of a saved branch.
    Stability(StabilityArgs),
    /// Time integration from a profile or a localised initial condition.
    Evolve(EvolveArgs),
    /// Interior wavenumber of a profile, or wavenumber loop along a branch.
    Wavenumber(WavenumberArgs),
    /// Maxwell point of the alpha = beta = 0 model.
    Maxwell(MaxwellArgs),
}

/// Model and grid flags shared by most commands.
#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub r: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<f64>,
    /// Domain length.
    #[arg(long)]
    pub length: Option<f64>,
    /// Grid points (power of two).
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct NfArgs {
    #[arg(long, allow_hyphen_values = true, required_unless_present = "surface")]
    pub b: Option<f64>,
    #[arg(long, allow_hyphen_values = true, required_unless_present = "surface")]
    pub alpha: Option<f64>,
    #[arg(long, allow_hyphen_values = true, required_unless_present = "surface")]
    pub beta: Option<f64>,
    /// Emit a CSV table of q2 and q4 instead of a single JSON report.
    #[arg(long)]
    pub surface: bool,
    /// Fixed variable for the table, e.g. `beta=0`.
    #[arg(long, requires = "surface")]
    pub slice: Option<axes::Slice>,
    #[arg(long, requires = "surface", allow_hyphen_values = true)]
    pub b_range: Option<axes::Range>,
    #[arg(long, requires = "surface", allow_hyphen_values = true)]
    pub alpha_range: Option<axes::Range>,
    #[arg(long, requires = "surface", allow_hyphen_values = true)]
    pub beta_range: Option<axes::Range>,
}

#[derive(Debug, Clone, Args)]
pub struct ContinueArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Branches to continue (L0, L1), run concurrently.
    #[arg(long, value_delimiter = ',', default_value = "L0")]
    pub branch: Vec<String>,
    /// Stop after this many folds.
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub ds: Option<f64>,
    #[arg(long)]
    pub ds_max: Option<f64>,
    #[arg(long)]
    pub max_points: Option<usize>,
    /// Annotate the branches with stability counts and bifurcations.
    #[arg(long)]
    pub stability: bool,
    /// Also trace the rung branches born at the pitchforks.
    #[arg(long)]
    pub rungs: bool,
    /// Continue from a saved profile instead of the small-amplitude seed.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Save a profile for every point, not just at events.
    #[arg(long)]
    pub save_all: bool,
}

#[derive(Debug, Clone, Args)]
pub struct StabilityArgs {
    /// Profile file whose spectrum is computed.
    #[arg(long, conflicts_with = "branch", required_unless_present = "branch")]
    pub profile: Option<PathBuf>,
    /// Branch file written by `continue --save-all`.
    #[arg(long)]
    pub branch: Option<PathBuf>,
    /// Number of leading eigenvalues written (0 = all).
    #[arg(long)]
    pub n_eigs: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct EvolveArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Initial condition; defaults to a one-peak localised bump.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub record_stride: Option<usize>,
    /// Perturb along the leading oscillatory eigenmode with this L2 amplitude.
    #[arg(long)]
    pub perturbation: Option<f64>,
    /// Add uniform random noise of this amplitude.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report the observed temporal order of both schemes instead of a run.
    #[arg(long)]
    pub convergence: bool,
}

#[derive(Debug, Clone, Args)]
pub struct WavenumberArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Measure a single profile instead of continuing a branch.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    #[arg(long, default_value = "L0")]
    pub branch: String,
    #[arg(long)]
    pub folds: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct MaxwellArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<f64>,
}
