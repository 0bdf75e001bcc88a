use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sccc::experiment::Preset;
use sccc::Family;

#[derive(Debug, Parser)]
#[command(name = "sccc", version, about = "Spatial concordance correlation: simulation, fitting and local analysis")]
pub struct Cli {
    /// Worker threads, or "auto" for one per core.
    #[arg(long, global = true, default_value = "auto")]
    pub threads: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate bivariate Gaussian fields on a lattice.
    #[command(args_override_self = true)]
    Simulate(SimulateArgs),
    /// Fit a bivariate covariance model by maximum likelihood.
    #[command(args_override_self = true)]
    Fit(FitArgs),
    /// Lin's concordance correlation of two vectors or images.
    #[command(args_override_self = true)]
    Lin(LinArgs),
    /// Windowed concordance of an image pair.
    #[command(args_override_self = true)]
    Local(LocalArgs),
    /// Monte Carlo recovery study of the concordance curve.
    #[command(args_override_self = true)]
    Mc(McArgs),
    /// Convert an RGB image to green chromatic coordinate or grayscale.
    #[command(args_override_self = true)]
    Gcc(GccArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Built-in parameter set.
    #[arg(long)]
    pub preset: Option<Preset>,
    /// Covariance family when no preset is given.
    #[arg(long)]
    pub family: Option<Family>,
    /// Parameter values as name=value; override the preset.
    #[arg(long = "param", value_delimiter = ',')]
    pub params: Vec<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub mu1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub mu2: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long, default_value_t = 20)]
    pub rows: usize,
    #[arg(long, default_value_t = 20)]
    pub cols: usize,
    /// Horizontal extent as min,max.
    #[arg(long, default_value = "-1.5,1.5", allow_hyphen_values = true)]
    pub x_range: String,
    /// Vertical extent as min,max.
    #[arg(long, default_value = "-1.5,1.5", allow_hyphen_values = true)]
    pub y_range: String,
}

#[derive(Debug, Args)]
pub struct LagArgs {
    /// Largest lag of the output curve.
    #[arg(long, default_value_t = 2.0)]
    pub lags_max: f64,
    /// Number of positive lags; h = 0 is always included.
    #[arg(long, default_value_t = 40)]
    pub lags_count: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "sccc-out")]
    pub out: PathBuf,
    /// key=value file of options; command-line flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Field-pair CSV with header row,col,x,y,z1,z2.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "wendland")]
    pub family: Family,
    /// Parameters held fixed, as name=value.
    #[arg(long, value_delimiter = ',')]
    pub fix: Vec<String>,
    /// One correlation function for both marginals and the cross term.
    #[arg(long)]
    pub shared_range: bool,
    /// Wendland smoothness; "free" estimates it.
    #[arg(long, default_value = "4")]
    pub nu: String,
    /// Hold the means at zero instead of estimating them.
    #[arg(long)]
    pub zero_means: bool,
    #[arg(long, default_value_t = 3000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    /// Confidence bands at level 1 - alpha.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[command(flatten)]
    pub lags: LagArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "sccc-out")]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Transform {
    None,
    Gray,
    Gcc,
}

#[derive(Debug, Args)]
pub struct ImageArgs {
    /// Pixel transform applied to RGB inputs.
    #[arg(long, value_enum, default_value_t = Transform::None)]
    pub transform: Transform,
    /// Grayscale weights: luma or equal.
    #[arg(long, default_value = "luma")]
    pub weights: String,
    /// Resample the second image to the size of the first.
    #[arg(long)]
    pub resize: bool,
}

#[derive(Debug, Args)]
pub struct LinArgs {
    /// First input: CSV of numbers or a PGM/PPM image.
    #[arg(long)]
    pub x: PathBuf,
    /// Second input, same kind and size as the first.
    #[arg(long)]
    pub y: PathBuf,
    #[command(flatten)]
    pub image: ImageArgs,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value = "sccc-out")]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyChoice {
    Auto,
    Matern,
    Wendland,
}

#[derive(Debug, Args)]
pub struct LocalArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[command(flatten)]
    pub image: ImageArgs,
    /// Window side in pixels.
    #[arg(long, default_value_t = 12)]
    pub window: usize,
    /// Family, or auto to choose by BIC on random probes.
    #[arg(long, value_enum, default_value_t = FamilyChoice::Auto)]
    pub family: FamilyChoice,
    #[arg(long, default_value_t = 10)]
    pub probes: usize,
    #[arg(long, default_value_t = 20)]
    pub probe_size: usize,
    /// Largest lag in pixels.
    #[arg(long, default_value_t = 6.0)]
    pub lags_max: f64,
    #[arg(long, default_value_t = 24)]
    pub lags_count: usize,
    #[arg(long, default_value_t = 3000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "sccc-out")]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 100)]
    pub replicates: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub lags: LagArgs,
    /// Estimate a single shared range.
    #[arg(long)]
    pub shared_range: bool,
    #[arg(long, default_value_t = 3000)]
    pub max_iter: usize,
    /// Suppress per-replicate progress on stderr.
    #[arg(long)]
    pub quiet: bool,
    #[arg(long, default_value = "sccc-out")]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GccMode {
    Gcc,
    Gray,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ImageOut {
    Pgm,
    Csv,
}

#[derive(Debug, Args)]
pub struct GccArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = GccMode::Gcc)]
    pub mode: GccMode,
    #[arg(long, default_value = "luma")]
    pub weights: String,
    #[arg(long, value_enum, default_value_t = ImageOut::Pgm)]
    pub format: ImageOut,
    #[arg(long, default_value = "sccc-out")]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}
