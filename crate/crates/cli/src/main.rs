//! `sparsebench` — benchmark distillation from the command line.
//!
//! Subcommands cover the individual stages (preprocessing, splitting, IRT
//! fitting, information filtering, tuning, reconstruction, factor analysis,
//! adaptive testing, synergy simulation) plus an end-to-end `pipeline` that
//! chains them over one or more benchmark response matrices.
//!
//! Exit codes: 0 on success, 1 on domain/numerical errors, 2 on input or
//! parse errors (including unknown flags). All randomness derives from
//! `--seed`, so identical invocations write identical artifacts.

mod commands;
mod io;
mod model;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sparsebench::irt::{AbilityEstimator, ModelKind};
use sparsebench::data::PreprocessConfig;

#[derive(Parser)]
#[command(
    name = "sparsebench",
    version,
    about = "Distill binary-response benchmarks into small informative item subsets",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter degenerate subjects and items out of a response matrix
    Preprocess(PreprocessArgs),
    /// Stratified test/validation/train subject split
    Split(SplitArgs),
    /// Score random item subsets of a fixed size against the full score
    Subsample(SubsampleArgs),
    /// Fit an item response model by EM and score every subject
    #[command(name = "fit-irt")]
    FitIrt(FitIrtArgs),
    /// Select one informative item per ability chunk
    Filter(FilterArgs),
    /// Random-search the filter configuration for the best RMSE + λ·k
    Tune(TuneArgs),
    /// Select a subset and reconstruct full scores from it with intervals
    Reconstruct(ReconstructArgs),
    /// Minres factor analysis of a numeric score/ability table
    Fa(FaArgs),
    /// Simulate adaptive testing over a recorded response matrix
    Cat(CatArgs),
    /// Two-benchmark synergy simulation over a correlation×loading grid
    Synergy(SynergyArgs),
    /// End-to-end distillation over one or more benchmarks
    Pipeline(PipelineArgs),
}

/// IRT link family, as `--model`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    #[value(name = "2pl")]
    TwoPl,
    #[value(name = "3pl")]
    ThreePl,
    #[value(name = "4pl")]
    FourPl,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> ModelKind {
        match m {
            ModelArg::TwoPl => ModelKind::TwoPl,
            ModelArg::ThreePl => ModelKind::ThreePl,
            ModelArg::FourPl => ModelKind::FourPl,
        }
    }
}

/// Ability estimator, as `--estimator`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Map,
    Eap,
    #[value(name = "eapsum")]
    EapSum,
}

impl From<EstimatorArg> for AbilityEstimator {
    fn from(e: EstimatorArg) -> AbilityEstimator {
        match e {
            EstimatorArg::Map => AbilityEstimator::Map,
            EstimatorArg::Eap => AbilityEstimator::Eap,
            EstimatorArg::EapSum => AbilityEstimator::EapSum,
        }
    }
}

/// Flags shared by every command that draws a subject split.
#[derive(Debug, Clone, Args)]
pub struct SplitFlags {
    /// Fraction of subjects held out as the test set
    #[arg(long, default_value_t = 0.1)]
    pub test_frac: f64,
    /// Fraction of the remaining subjects held out for validation
    #[arg(long, default_value_t = 0.1)]
    pub val_frac: f64,
    /// Number of equal-frequency score bins stratifying the split
    #[arg(long, default_value_t = 5)]
    pub bins: usize,
}

/// Preprocessing thresholds shared by `preprocess` and `pipeline`.
#[derive(Debug, Clone, Args)]
pub struct PreprocessFlags {
    /// Drop subjects scoring strictly below this score quantile
    #[arg(long, default_value_t = 0.001)]
    pub low_score_quantile: f64,
    /// Drop items whose response standard deviation falls below this
    #[arg(long, default_value_t = 0.01)]
    pub min_item_sd: f64,
    /// Drop items whose mean accuracy exceeds this
    #[arg(long, default_value_t = 0.95)]
    pub max_item_mean: f64,
    /// Drop items whose |point-biserial| is at most this
    #[arg(long, default_value_t = 0.005)]
    pub pbis_zero_band: f64,
}

impl PreprocessFlags {
    pub fn to_config(&self) -> PreprocessConfig<f64> {
        PreprocessConfig {
            low_score_quantile: self.low_score_quantile,
            min_item_sd: self.min_item_sd,
            max_item_mean: self.max_item_mean,
            pbis_zero_band: self.pbis_zero_band,
        }
    }
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Response matrix CSV (subject_id,<item ids...>; cells 0/1)
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory
    #[arg(long)]
    pub output: PathBuf,
    /// Master random seed (echoed into artifacts; preprocessing draws nothing)
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub thresholds: PreprocessFlags,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Response matrix CSV
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory
    #[arg(long)]
    pub output: PathBuf,
    /// Master random seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub split: SplitFlags,
}

#[derive(Debug, Args)]
pub struct SubsampleArgs {
    /// Response matrix CSV
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory
    #[arg(long)]
    pub output: PathBuf,
    /// Master random seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Subset size (clamped to the item count)
    #[arg(long, default_value_t = 350)]
    pub k: usize,
    /// Number of random subsets to draw
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    #[command(flatten)]
    pub split: SplitFlags,
}

#[derive(Debug, Args)]
pub struct FitIrtArgs {
    /// Response matrix CSV
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory
    #[arg(long)]
    pub output: PathBuf,
    /// Master random seed (echoed; the EM fit itself is deterministic)
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Item response model family
    #[arg(long, value_enum, default_value_t = ModelArg::TwoPl)]
    pub model: ModelArg,
    /// Ability estimator for the per-subject scores
    #[arg(long, value_enum, default_value_t = EstimatorArg::Map)]
    pub estimator: EstimatorArg,
    /// Maximum EM cycles
    #[arg(long, default_value_t = 500)]
    pub max_cycles: usize,
    /// Stop EM when the largest parameter change in a cycle falls below this
    #[arg(long, default_value_t = 1e-4)]
    pub param_tol: f64,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// Response matrix CSV
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory
    #[arg(long)]
    pub output: PathBuf,
    /// Master random seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Item response model family (used when fitting fresh)
    #[arg(long, value_enum, default_value_t = ModelArg::TwoPl)]
    pub model: ModelArg,
    /// Ability estimator for the chunk medians (map or eapsum)
    #[arg(long, value_enum, default_value_t = EstimatorArg::Map)]
    pub estimator: EstimatorArg,
    /// Number of ability chunks, i.e. the target subset size
    #[arg(long, default_value_t = 350)]
    pub k: usize,
    /// Minimum Fisher information a chunk's best item must exceed
    #[arg(long, default_value_t = 0.0)]
    pub tau: f64,
    /// Reuse a saved model instead of fitting one (must match the matrix items)
    #[arg(long)]
    pub model_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    /// Response matrix CSV
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory
    #[arg(long)]
    pub output: PathBuf,
    /// Master random seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Target subset size (clamped to the item count)
    #[arg(long, default_value_t = 350)]
    pub k: usize,
    /// Weight of the subset size in the objective RMSE + λ·k
    #[arg(long, default_value_t = 0.005)]
    pub lambda: f64,
    /// Number of random candidate configurations to evaluate
    #[arg(long, default_value_t = 64)]
    pub budget: usize,
    #[command(flatten)]
    pub split: SplitFlags,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Response matrix CSV
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory
    #[arg(long)]
    pub output: PathBuf,
    /// Master random seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Target subset size (clamped to the item count)
    #[arg(long, default_value_t = 350)]
    pub k: usize,
    /// Item response model family
    #[arg(long, value_enum, default_value_t = ModelArg::TwoPl)]
    pub model: ModelArg,
    /// Ability estimator (map or eapsum; the filter rejects eap)
    #[arg(long, value_enum, default_value_t = EstimatorArg::Map)]
    pub estimator: EstimatorArg,
    /// Minimum Fisher information a chunk's best item must exceed
    #[arg(long, default_value_t = 0.0)]
    pub tau: f64,
    #[command(flatten)]
    pub split: SplitFlags,
}

#[derive(Debug, Args)]
pub struct FaArgs {
    /// Numeric table CSV (subject_id,<column names...>; float cells)
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory
    #[arg(long)]
    pub output: PathBuf,
    /// Master random seed (echoed; the fit is deterministic)
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of factors to extract
    #[arg(long, default_value_t = 1)]
    pub factors: usize,
    /// Ridge regularization for the factor scores
    #[arg(long, default_value_t = 0.05)]
    pub ridge: f64,
}

#[derive(Debug, Args)]
pub struct CatArgs {
    /// Recorded response matrix CSV (the item bank)
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory
    #[arg(long)]
    pub output: PathBuf,
    /// Master random seed (echoed; the simulation is deterministic)
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Item response model family (used when fitting fresh)
    #[arg(long, value_enum, default_value_t = ModelArg::TwoPl)]
    pub model: ModelArg,
    /// Ability estimator inside the simulation (map or eap)
    #[arg(long, value_enum, default_value_t = EstimatorArg::Map)]
    pub estimator: EstimatorArg,
    /// Stop once the ability standard error falls below this
    #[arg(long, default_value_t = 0.1)]
    pub se_stop: f64,
    /// Starting ability estimate, an integer in [-2, 2]
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    pub initial_theta: i32,
    /// Reuse a saved model instead of fitting one (must match the matrix items)
    #[arg(long)]
    pub model_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynergyArgs {
    /// Output directory
    #[arg(long)]
    pub output: PathBuf,
    /// Master random seed; repetition r uses seed + r
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of seeds averaged per grid cell
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    /// Ability correlations to sweep
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.25, 0.5, 0.75])]
    pub rhos: Vec<f64>,
    /// Cross-loading strengths to sweep
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.5, 1.0])]
    pub alphas: Vec<f64>,
    /// Subjects per simulated benchmark
    #[arg(long, default_value_t = 500)]
    pub subjects: usize,
    /// Items per simulated benchmark
    #[arg(long, default_value_t = 100)]
    pub items: usize,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// One response matrix CSV per benchmark (names taken from file stems)
    #[arg(long, num_args = 1.., required = true)]
    pub input: Vec<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub output: PathBuf,
    /// Master random seed; every stage draws from a stream derived from it
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Target subset size per benchmark (clamped to each item count)
    #[arg(long, default_value_t = 350)]
    pub k: usize,
    /// Weight of the subset size in the tuning objective RMSE + λ·k
    #[arg(long, default_value_t = 0.005)]
    pub lambda: f64,
    /// Number of tuning candidates per benchmark
    #[arg(long, default_value_t = 64)]
    pub budget: usize,
    /// Number of random subsets scored against each selection
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    /// JSON file of item ids to drop before preprocessing (e.g. a previous
    /// selection.json, an item-subset artifact, or a plain id array)
    #[arg(long)]
    pub exclude_items: Option<PathBuf>,
    #[command(flatten)]
    pub split: SplitFlags,
    #[command(flatten)]
    pub thresholds: PreprocessFlags,
}

fn run(cli: Cli) -> sparsebench::Result<()> {
    match cli.command {
        Command::Preprocess(args) => commands::preprocess::run(&args),
        Command::Split(args) => commands::split::run(&args),
        Command::Subsample(args) => commands::subsample::run(&args),
        Command::FitIrt(args) => commands::fit_irt::run(&args),
        Command::Filter(args) => commands::filter::run(&args),
        Command::Tune(args) => commands::tune::run(&args),
        Command::Reconstruct(args) => commands::reconstruct::run(&args),
        Command::Fa(args) => commands::fa::run(&args),
        Command::Cat(args) => commands::cat::run(&args),
        Command::Synergy(args) => commands::synergy::run(&args),
        Command::Pipeline(args) => commands::pipeline::run(&args),
    }
}

fn main() {
    // Unknown flags and malformed values never reach `run`: clap prints the
    // usage message and exits with code 2 (0 for --help/--version).
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(i32::from(err.exit_code()));
    }
}
