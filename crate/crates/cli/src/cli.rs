use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "nwfr", version, about = "Network-weighted functional regression")]
pub struct Cli {
    /// Worker threads (overrides NWFR_THREADS; default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate one benchmark instance (dataset, network, community labels).
    Simulate(SimulateArgs),
    /// Fit per-vertex blocks and report in-sample goodness of fit.
    Fit(FitArgs),
    /// Permutation test of coefficient stability across vertices.
    Permtest(PermtestArgs),
    /// Split-conformal prediction bands on held-out vertices.
    Conformal(ConformalArgs),
    /// Replicated benchmark study over scenarios.
    Bench(BenchArgs),
    /// Build a dataset and network from sensor logs.
    Ingest(IngestArgs),
    /// Export coefficient surfaces and fitted curves as CSV.
    Plotdata(PlotdataArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    /// Geodesic distances on the network.
    Nwfr,
    /// Euclidean distances between vertex coordinates.
    Gwfr,
    /// One pooled fit shared by every vertex.
    Classic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    Desk,
    Full,
}

#[derive(Debug, Clone, Args)]
pub struct ProviderArgs {
    /// Dataset JSON.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "nwfr")]
    pub model: ModelArg,
    /// Edge-list CSV (`u,v,weight`, 0-based vertex indices).
    #[arg(long)]
    pub network: Option<PathBuf>,
    /// Coordinate rows, one per vertex (falls back to the dataset's coordinates).
    #[arg(long)]
    pub coords: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EstimationArgs {
    /// Kernel bandwidth, or `cv` for leave-one-out selection.
    #[arg(long, default_value = "cv")]
    pub theta: String,
    /// Ridge as a multiple of trace(XᵀWX)/M.
    #[arg(long, default_value_t = 1e-8, conflicts_with = "ridge_abs")]
    pub ridge_rel: f64,
    /// Absolute ridge λ (0 disables stabilization).
    #[arg(long)]
    pub ridge_abs: Option<f64>,
    /// Score at most this many held-out vertices during bandwidth CV.
    #[arg(long)]
    pub cv_holdout: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value = "One/Equal/Low")]
    pub scenario: String,
    #[arg(long, value_enum, default_value = "desk")]
    pub scale: ScaleArg,
    #[arg(long)]
    pub n_total: Option<usize>,
    #[arg(long)]
    pub n_basis: Option<usize>,
    #[arg(long)]
    pub noise_var: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub provider: ProviderArgs,
    #[command(flatten)]
    pub est: EstimationArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Grid points for goodness-of-fit evaluation.
    #[arg(long, default_value_t = 201)]
    pub grid_points: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PermtestArgs {
    #[command(flatten)]
    pub provider: ProviderArgs,
    #[command(flatten)]
    pub est: EstimationArgs,
    /// Covariate index tested.
    #[arg(long, default_value_t = 0)]
    pub covariate: usize,
    #[arg(long, default_value_t = 1000)]
    pub nperm: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConformalArgs {
    #[command(flatten)]
    pub provider: ProviderArgs,
    #[command(flatten)]
    pub est: EstimationArgs,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Nonconformity score: d2 or dinf.
    #[arg(long, default_value = "dinf")]
    pub score: String,
    /// Calibration share of the non-test vertices.
    #[arg(long, default_value_t = 0.5)]
    pub cal_frac: f64,
    /// Test share of all vertices.
    #[arg(long, default_value_t = 0.2)]
    pub test_frac: f64,
    /// Community labels JSON (array, one per vertex); default: Louvain on the network.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Calibrate on exactly one vertex per community.
    #[arg(long)]
    pub one_per_community: bool,
    #[arg(long, default_value_t = 201)]
    pub grid_points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Scenario label (repeatable) or `all`.
    #[arg(long, default_value = "One/Equal/Low")]
    pub scenario: Vec<String>,
    #[arg(long, value_enum, default_value = "desk")]
    pub scale: ScaleArg,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Bandwidth for NWFR, or `cv`.
    #[arg(long, default_value = "cv")]
    pub theta: String,
    #[arg(long)]
    pub no_conformal: bool,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Sensor log: `date time epoch moteid temperature humidity light voltage`.
    #[arg(long)]
    pub readings: PathBuf,
    /// Link table: `from to probability`.
    #[arg(long)]
    pub connectivity: PathBuf,
    /// Sensor locations: `id x y`.
    #[arg(long)]
    pub locations: Option<PathBuf>,
    /// Window length in minutes.
    #[arg(long, default_value_t = 15)]
    pub window: u32,
    /// Neighbours used for imputation.
    #[arg(long, default_value_t = 3)]
    pub k_impute: usize,
    /// Range start (default 2004-03-01 21:00).
    #[arg(long)]
    pub start: Option<String>,
    /// Range end, exclusive (default 2004-03-02 21:00).
    #[arg(long)]
    pub end: Option<String>,
    /// Skip zero-probability links instead of rejecting them.
    #[arg(long)]
    pub drop_zero: bool,
    /// Light column holds raw Lux; apply ln(1 + x).
    #[arg(long)]
    pub light_log1p: bool,
    #[arg(long, default_value_t = 21)]
    pub n_basis: usize,
    #[arg(long, default_value_t = 0.0)]
    pub penalty: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlotdataArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Model JSON written by `fit`.
    #[arg(long)]
    pub model_file: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub vertex: usize,
    #[arg(long, default_value_t = 0)]
    pub covariate: usize,
    #[arg(long, default_value_t = 101)]
    pub grid_points: usize,
    #[arg(long)]
    pub out: PathBuf,
}
