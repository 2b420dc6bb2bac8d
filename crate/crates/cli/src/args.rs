use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "scalingnet", version, about = "Train and inspect ScalingNet EEG classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cross-validate on a dataset and write the report and per-fold checkpoints.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset, or on one fold's test split.
    Eval(EvalArgs),
    /// Run the finite-difference gradient suite.
    Gradcheck(GradcheckArgs),
    /// Write a synthetic two-band dataset in the intermediate format.
    SynthGen(SynthArgs),
    /// Write one channel's feature map of one trial as CSV and PGM.
    ExportFeatures(ExportArgs),
    /// Cross-validate once per base-kernel length.
    Sweep(SweepArgs),
    /// Compare the scaling layer against the plain-kernel baseline.
    Ablate(TrainArgs),
    /// Validate a dataset directory and print its manifest.
    IngestCheck(IngestArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutArg {
    /// Any consistent shape.
    Any,
    /// 32 subjects x 40 trials, 32 EEG channels, 8064 samples at 128 Hz.
    Deap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantArg {
    Scaling,
    Baseline,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Directory of `sNN.bin` subject files.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub layout: Option<LayoutArg>,
    /// Drop the first 384 samples (3 s pre-trial baseline) of every trial.
    #[arg(long)]
    pub drop_baseline: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// TOML file with defaults for any of these flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    /// arousal, valence, dominance or all.
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub weight_length: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Output directory; created if missing.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Serial gradient reduction, for byte-identical reruns.
    #[arg(long)]
    pub strict: bool,
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    /// Conv stage filter counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub filters: Option<Vec<usize>>,
    /// Stop a fold after this many epochs without loss improvement.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Share one scaling layer across channels.
    #[arg(long)]
    pub shared_scaling: bool,
    /// Keep only the first N scaling levels.
    #[arg(long)]
    pub max_levels: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Base-kernel lengths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub lengths: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub target: String,
    /// Evaluate only on this fold's test split (needs --seed).
    #[arg(long)]
    pub fold: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    /// First seed of the suite.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of consecutive seeds.
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 400)]
    pub trials: usize,
    #[arg(long, default_value_t = 4)]
    pub channels: usize,
    #[arg(long, default_value_t = 512)]
    pub samples: usize,
    #[arg(long, default_value_t = 128.0)]
    pub rate: f64,
    /// Sinusoids per trial.
    #[arg(long, default_value_t = 3)]
    pub components: usize,
    /// Signal RMS over noise standard deviation.
    #[arg(long, default_value_t = 2.0)]
    pub snr: f64,
}

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Zero-based record index.
    #[arg(long, default_value_t = 0)]
    pub trial: usize,
    /// Zero-based channel index.
    #[arg(long, default_value_t = 0)]
    pub channel: usize,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub data: DataArgs,
}
