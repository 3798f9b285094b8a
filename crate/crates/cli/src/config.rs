use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use klfactor::{algebra, correlation};
use serde::Serialize;

/// Correlation operators, Karhunen-Loève / POD truncation and
/// finite probability algebras.
#[derive(Debug, Clone, Parser, Serialize)]
#[command(name = "klfactor", version, about)]
pub struct RunConfig {
    /// Directory for reports and CSV outputs (created if missing).
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,

    /// Tolerance for element classification and independence tests.
    #[arg(long, global = true, default_value_t = algebra::DEFAULT_TOL)]
    pub tol: f64,

    /// Eigenvalues at or below `rank_tol · λ₁` produce no modes.
    #[arg(long, global = true, default_value_t = correlation::RANK_TOL)]
    pub rank_tol: f64,

    /// Largest accepted state dimension for correlation operators.
    #[arg(long, global = true, default_value_t = correlation::DEFAULT_DIM_CAP)]
    pub dim_cap: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "lowercase")]
pub enum Command {
    /// Correlation operator, modes and coefficients of a snapshot set.
    Pod(PodArgs),
    /// Companion (kernel) eigenproblem, factorisations and connecting maps.
    Mercer(MercerArgs),
    /// State, classification, spectrum, law and norms of algebra elements.
    Algebra(AlgebraArgs),
    /// Sample paths of a stationary process from its spectral density.
    Synth(SynthArgs),
    /// Stochastic Galerkin solve of `v' + κ v = f` with error report.
    Galerkin(GalerkinArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Pod(_) => "pod",
            Command::Mercer(_) => "mercer",
            Command::Algebra(_) => "algebra",
            Command::Synth(_) => "synth",
            Command::Galerkin(_) => "galerkin",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SnapshotArgs {
    /// CSV with one snapshot per column; an all-text first row is read as labels.
    #[arg(long)]
    pub snapshots: PathBuf,

    /// JSON weights: `[w1, ...]` or `{"weights": [...]}`.
    #[arg(long, conflicts_with = "uniform_weights")]
    pub weights: Option<PathBuf>,

    /// Give every snapshot weight 1/m.
    #[arg(long)]
    pub uniform_weights: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PodArgs {
    #[command(flatten)]
    pub input: SnapshotArgs,

    /// Number of retained modes (default: the numerical rank).
    #[arg(long)]
    pub rank: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MercerArgs {
    #[arg(long, required_unless_present = "correlation")]
    pub snapshots: Option<PathBuf>,

    #[arg(long, conflicts_with = "uniform_weights")]
    pub weights: Option<PathBuf>,

    #[arg(long)]
    pub uniform_weights: bool,

    /// Factorise this symmetric PSD matrix instead of a snapshot correlation.
    #[arg(long, conflicts_with = "snapshots")]
    pub correlation: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AlgebraArgs {
    /// Algebra JSON: `{"model":"function","weights":[...]}` or `{"model":"matrix","rho":[...]}`.
    #[arg(long)]
    pub spec: PathBuf,

    /// Element CSV: one row for the function model, an n×n complex matrix otherwise.
    #[arg(long)]
    pub element: PathBuf,

    /// Second element for covariance, independence and the uncertainty gap.
    #[arg(long)]
    pub element2: Option<PathBuf>,

    /// Rescale weights or the density to unit mass.
    #[arg(long)]
    pub auto_normalise: bool,

    /// Exponents for the L_p norms (`inf` allowed).
    #[arg(long = "p", value_delimiter = ',', default_value = "1,2,inf")]
    pub exponents: Vec<String>,

    /// Highest monomial degree used by the independence test.
    #[arg(long, default_value_t = 4)]
    pub degree: usize,

    /// Highest moment reported for self-adjoint elements.
    #[arg(long, default_value_t = 4)]
    pub moments: u32,

    /// Function applied through the spectral calculus, as JSON (e.g. `{"fn":"sqrt"}`).
    #[arg(long = "fn")]
    pub function: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    /// Model JSON `{omega0, domega, S, seed}`.
    #[arg(long)]
    pub model: PathBuf,

    #[arg(long)]
    pub paths: usize,

    /// CSV holding the sample times as one row or one column.
    #[arg(long)]
    pub times: PathBuf,

    /// Lags for the autocovariance check.
    #[arg(long, value_delimiter = ',')]
    pub lags: Vec<f64>,

    /// Replaces the seed stored in the model file.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GalerkinArgs {
    /// Problem JSON `{weights, kappa, f_const | f_table, u0, T, steps, keep}`.
    #[arg(long)]
    pub problem: PathBuf,

    /// Rescale the weights to unit mass.
    #[arg(long)]
    pub auto_normalise: bool,
}
