use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use neuroencode::hmm::PredictionMode;
use neuroencode::stacking::StackingMode;

#[derive(Debug, Parser)]
#[command(name = "neuroencode", version, about = "Lagged ridge encoding models, stacking and HMMs for parcel fMRI time series")]
pub struct Cli {
    #[command(flatten)]
    pub shared: SharedArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SharedArgs {
    /// Run manifest (JSON).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Pipeline config (JSON); flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Split shorthand `fit[-stack]`, e.g. `12346-5BW`.
    #[arg(long, global = true)]
    pub split: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with planted ground truth.
    Synth(SynthArgs),
    /// Fit per-model alignment, PCA and ridge on the fit split.
    Fit(FitArgs),
    /// Predict runs carrying the given tags with fitted models.
    Predict(PredictArgs),
    /// Fit stacking weights on the stack split and predict the test split.
    Stack(StackArgs),
    /// Fit an HMM on the fit split and predict the test split.
    Hmm(HmmArgs),
    /// Score a prediction against truth.
    Eval(EvalArgs),
    /// Aggregate per-subject score reports.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CoverageArg {
    Uniform,
    Complementary,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 6)]
    pub runs: usize,
    /// Rows per run.
    #[arg(long, default_value_t = 500)]
    pub trs: usize,
    /// Feature sources as `name:dim,...`.
    #[arg(long, default_value = "vision:64,audio:32,text:128")]
    pub models: String,
    #[arg(long, default_value_t = 100)]
    pub parcels: usize,
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    /// Planted stimulus window.
    #[arg(long, default_value_t = 2)]
    pub sw: usize,
    /// Planted hemodynamic delay in rows.
    #[arg(long, default_value_t = 3)]
    pub delay: usize,
    #[arg(long, value_enum, default_value_t = CoverageArg::Uniform)]
    pub coverage: CoverageArg,
    /// Relative gain of non-primary sources under complementary coverage.
    #[arg(long, default_value_t = 0.2)]
    pub cross_gain: f64,
    /// Lag-one autocorrelation of the features.
    #[arg(long, default_value_t = 0.5)]
    pub autocorr: f64,
    /// Plant a hidden-state offset sequence with this many states.
    #[arg(long)]
    pub states: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub state_separation: f64,
    #[arg(long, default_value_t = 0.95)]
    pub self_transition: f64,
}

#[derive(Debug, Clone, Default, Args)]
pub struct FitArgs {
    /// Models to fit (defaults to every model in the manifest).
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<String>>,
    #[arg(long)]
    pub n_comp: Option<usize>,
    #[arg(long)]
    pub sw: Option<usize>,
    #[arg(long)]
    pub delay: Option<usize>,
    /// Row stride of the PCA fit subsample.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Tag segment whose features fit the PCA (defaults to the fit split).
    #[arg(long)]
    pub pca_fit_split: Option<String>,
    /// Stimulus windows to sweep, scored on the stack split.
    #[arg(long, value_delimiter = ',')]
    pub sweep_sw: Option<Vec<usize>>,
    /// Component counts to sweep, scored on the stack split.
    #[arg(long, value_delimiter = ',')]
    pub sweep_n_comp: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub alpha_grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    /// Directory of fitted model files.
    #[arg(long)]
    pub models_dir: PathBuf,
    /// Tag segment of the runs to predict, e.g. `7`.
    #[arg(long)]
    pub tags: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StackingModeArg {
    Simplex,
    RidgeUnconstrained,
}

impl From<StackingModeArg> for StackingMode {
    fn from(m: StackingModeArg) -> Self {
        match m {
            StackingModeArg::Simplex => StackingMode::Simplex,
            StackingModeArg::RidgeUnconstrained => StackingMode::RidgeUnconstrained,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct StackArgs {
    /// Directory of fitted model files.
    #[arg(long)]
    pub models_dir: Option<PathBuf>,
    /// Tag segment of the held-out test runs.
    #[arg(long)]
    pub test_tags: Option<String>,
    #[arg(long, value_enum)]
    pub mode: Option<StackingModeArg>,
    /// Split shorthands to probe; each refits the base models.
    #[arg(long, value_delimiter = ',')]
    pub probe_splits: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    /// Measured predictor parcels of the test runs.
    TrueX,
    /// Predictor time series from a provider model.
    Provider,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Expectation,
    Sample,
}

impl From<ModeArg> for PredictionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Expectation => PredictionMode::Expectation,
            ModeArg::Sample => PredictionMode::Sample,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct HmmArgs {
    #[arg(long)]
    pub test_tags: Option<String>,
    #[arg(long)]
    pub states: Option<usize>,
    /// Predictor parcel indices; omit for the plain Gaussian kind.
    #[arg(long, value_delimiter = ',')]
    pub predictors: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    /// Provider predictions of the predictor parcels over the test runs.
    #[arg(long)]
    pub provider: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub x_components: Option<usize>,
    #[arg(long)]
    pub y_components: Option<usize>,
    #[arg(long, default_value = "sub-01")]
    pub subject: String,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Prediction matrix.
    #[arg(long)]
    pub pred: PathBuf,
    /// Truth matrix; alternatively `--manifest` with `--tags`.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Tag segment whose manifest bold is the truth.
    #[arg(long)]
    pub tags: Option<String>,
    /// Truth columns to score against (defaults to all).
    #[arg(long, value_delimiter = ',')]
    pub parcels: Option<Vec<usize>>,
    /// JSON object mapping group names to parcel index lists.
    #[arg(long)]
    pub groups: Option<PathBuf>,
    #[arg(long, default_value = "sub-01")]
    pub subject: String,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Score report JSON files written by `eval`.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}
