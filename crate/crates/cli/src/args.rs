//! Command-line grammar.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "pslosses", version, about = "Propensity-scored losses and metrics for multilabel learning with missing labels")]
pub struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, env = "PSLOSSES_THREADS", default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-label propensities from the label counts of a dataset.
    Propensity(PropensityArgs),
    /// Mean and spread of recall estimators under repeated masking.
    SimulateRecall(SimulateArgs),
    /// Precision and recall at k, optionally propensity-scored.
    Evaluate(EvaluateArgs),
    /// Train a linear model.
    Train(TrainArgs),
    /// Regularization sweep on clean and masked training labels.
    Sweep(SweepArgs),
    /// Finite-sample and noise-pattern parts of the generalization gap.
    GapAnalysis(GapArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PropensityModel {
    /// `1 / (1 + c (n_j + b)^-a)` fitted to label counts.
    Empirical,
    /// Inverse propensity rising linearly with the frequency rank.
    LinearInverse,
}

#[derive(Debug, Args)]
pub struct PropensityArgs {
    /// Dataset in the XMC text format or the binary cache format.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = PropensityModel::Empirical)]
    pub model: PropensityModel,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    /// Dataset size in the model constant; defaults to the number of examples.
    #[arg(long)]
    pub n: Option<u64>,
    /// Inverse propensity of the most frequent label.
    #[arg(long, default_value_t = 2.0)]
    pub top: f64,
    /// Inverse propensity of the least frequent label.
    #[arg(long, default_value_t = 20.0)]
    pub bottom: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UpperBoundFormArg {
    ExcludeSelf,
    IncludeAll,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 100)]
    pub labels: usize,
    #[arg(long, default_value_t = 0.1)]
    pub label_prob: f64,
    #[arg(long, default_value_t = 10_000)]
    pub examples: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")]
    pub p_grid: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Leave examples without observed labels out of the averages.
    #[arg(long)]
    pub skip_empty: bool,
    /// Denominator of the upper-bound weights.
    #[arg(long, value_enum, default_value_t = UpperBoundFormArg::ExcludeSelf)]
    pub upper_bound_form: UpperBoundFormArg,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Dataset with the reference labels.
    #[arg(long)]
    pub truth: PathBuf,
    /// Dense score matrix, one whitespace-separated row per example.
    #[arg(long, conflicts_with = "model", required_unless_present = "model")]
    pub scores: Option<PathBuf>,
    /// Model checkpoint; scores are computed from the features of `--truth`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub propensities: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1,3,5")]
    pub k: Vec<usize>,
    /// Also report propensity-scored precision and recall.
    #[arg(long, requires = "propensities")]
    pub ps: bool,
    /// Fraction removed from each tail before averaging.
    #[arg(long, default_value_t = 0.01)]
    pub filter_q: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output JSON report.
    #[arg(long)]
    pub out: PathBuf,
}

/// Training options; unset flags fall back to the config file, then to the
/// built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct TrainOverrides {
    /// Key-value config file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Reduction and base loss, e.g. `ova-bce`, `ova_n-se`, `pal-cce`.
    #[arg(long)]
    pub loss: Option<String>,
    /// `vanilla`, `unbiased` or `upper_bound`.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub epochs_phase1: Option<usize>,
    #[arg(long)]
    pub lr_phase1: Option<f64>,
    #[arg(long)]
    pub epochs_phase2: Option<usize>,
    #[arg(long)]
    pub lr_phase2: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Epochs trained with the vanilla loss before switching.
    #[arg(long)]
    pub pretrain_vanilla_epochs: Option<usize>,
    /// Parameter grid, e.g. `l2=1e-4,1e-3,1e-2`.
    #[arg(long)]
    pub sweep: Option<String>,
}

/// Where the propensities come from.
#[derive(Debug, Clone, Args)]
pub struct PropensitySource {
    /// Propensity TSV.
    #[arg(long, conflicts_with = "linear_inverse")]
    pub propensities: Option<PathBuf>,
    /// Linear inverse-propensity schedule `top,bottom` assigned by label
    /// frequency in the training data.
    #[arg(long, value_delimiter = ',')]
    pub linear_inverse: Option<Vec<f64>>,
}

/// Feature and label preprocessing shared by the training commands.
#[derive(Debug, Clone, Args)]
pub struct Preprocess {
    /// Keep only the n most frequent training labels.
    #[arg(long)]
    pub top_labels: Option<usize>,
    /// Replace feature values by L2-normalized tf-idf weights.
    #[arg(long)]
    pub tfidf: bool,
    /// Use the smoothed idf `ln((1 + N) / (1 + df)) + 1`.
    #[arg(long, requires = "tfidf")]
    pub idf_smooth: bool,
    /// Drop examples left without labels.
    #[arg(long)]
    pub drop_unlabeled: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training data.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub propensity: PropensitySource,
    #[command(flatten)]
    pub preprocess: Preprocess,
    /// Mask the training labels with the propensities before training.
    #[arg(long)]
    pub inject_noise: bool,
    #[command(flatten)]
    pub train: TrainOverrides,
    /// Per-epoch objective CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Model checkpoint, or a directory of checkpoints with `--sweep`.
    #[arg(long)]
    pub out: PathBuf,
}

/// Train and test data: files, or a synthetic linear problem when no files
/// are given.
#[derive(Debug, Clone, Args)]
pub struct ExperimentData {
    #[arg(long, requires = "test_data")]
    pub train_data: Option<PathBuf>,
    #[arg(long, requires = "train_data")]
    pub test_data: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub synthetic_examples: usize,
    #[arg(long, default_value_t = 50)]
    pub synthetic_features: usize,
    #[arg(long, default_value_t = 20)]
    pub synthetic_labels: usize,
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
    /// Fraction of the training data held out for validation.
    #[arg(long, default_value_t = 0.3)]
    pub val_fraction: f64,
    #[command(flatten)]
    pub propensity: PropensitySource,
    #[command(flatten)]
    pub preprocess: Preprocess,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    Clean,
    Noisy,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelectionArg {
    NoisyValUnbiased,
    CleanValVanilla,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: ExperimentData,
    #[command(flatten)]
    pub train: TrainOverrides,
    #[arg(long, value_enum, default_value_t = RegimeArg::Both)]
    pub regime: RegimeArg,
    /// Model-selection rule; defaults to the validation split matching the
    /// training labels.
    #[arg(long, value_enum)]
    pub selection: Option<SelectionArg>,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GapArgs {
    #[command(flatten)]
    pub data: ExperimentData,
    #[command(flatten)]
    pub train: TrainOverrides,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}
