//! Settings resolution: command-line flags, then the optional TOML file, then
//! built-in defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use scalingnet::data::{Layout, ReadOptions, Target};
use scalingnet::training::{AdamConfig, TrainOptions, SWEEP_LENGTHS};
use scalingnet::{ScalingNetConfig, Variant};

use crate::args::{DataArgs, LayoutArg, TrainArgs, VariantArg};
use crate::CliError;

/// Keys accepted in a `--config` file. Names match the long flags.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub data: Option<PathBuf>,
    pub layout: Option<LayoutArg>,
    pub drop_baseline: Option<bool>,
    pub target: Option<String>,
    pub weight_length: Option<usize>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub folds: Option<usize>,
    pub output: Option<PathBuf>,
    pub strict: Option<bool>,
    pub variant: Option<VariantArg>,
    pub filters: Option<Vec<usize>>,
    pub patience: Option<usize>,
    pub shared_scaling: Option<bool>,
    pub max_levels: Option<usize>,
    pub lengths: Option<Vec<usize>>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::new(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| {
            let msg = e.message().replace('\n', " ");
            CliError::new(format!("{}: {msg}", path.display()))
        })
    }
}

#[derive(Debug, Clone)]
pub struct Resolved {
    pub data: PathBuf,
    pub read: ReadOptions,
    pub targets: Vec<Target>,
    pub model: ScalingNetConfig,
    pub variant: Variant,
    pub train: TrainOptions,
    pub output: PathBuf,
    pub lengths: Vec<usize>,
}

pub fn parse_targets(s: &str) -> Result<Vec<Target>, CliError> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(Target::ALL.to_vec());
    }
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<Target>()
                .map_err(|_| CliError::new(format!("unknown target `{t}` (expected arousal, valence, dominance or all)")))
        })
        .collect()
}

pub fn read_options(layout: Option<LayoutArg>, drop_baseline: bool) -> ReadOptions {
    ReadOptions {
        layout: match layout {
            Some(LayoutArg::Deap) => Layout::Deap,
            _ => Layout::Any,
        },
        drop_baseline,
    }
}

pub fn require_data(d: &DataArgs) -> Result<&Path, CliError> {
    d.data
        .as_deref()
        .ok_or_else(|| CliError::new("--data is required"))
}

/// Merges flags over the file over defaults and checks the invariants.
/// `needs_seed` is set for the training subcommands.
pub fn resolve(
    args: &TrainArgs,
    lengths: Option<&[usize]>,
    needs_seed: bool,
) -> Result<Resolved, CliError> {
    let file = match &args.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let model_defaults = ScalingNetConfig::default();
    let train_defaults = TrainOptions::default();

    let data = args
        .data
        .data
        .clone()
        .or(file.data)
        .ok_or_else(|| CliError::new("a dataset is required (--data or `data` in the config file)"))?;
    let read = read_options(
        args.data.layout.or(file.layout),
        args.data.drop_baseline || file.drop_baseline.unwrap_or(false),
    );
    let targets = parse_targets(args.target.as_deref().or(file.target.as_deref()).unwrap_or("all"))?;
    let weight_length = args
        .weight_length
        .or(file.weight_length)
        .unwrap_or(model_defaults.weight_length);
    if weight_length % 2 == 0 {
        return Err(CliError::new(format!("weight-length must be odd, got {weight_length}")));
    }
    let folds = args.folds.or(file.folds).unwrap_or(train_defaults.folds);
    if folds < 2 {
        return Err(CliError::new(format!("folds must be at least 2, got {folds}")));
    }
    let seed = args.seed.or(file.seed);
    if needs_seed && seed.is_none() {
        return Err(CliError::new("--seed is required (or `seed` in the config file)"));
    }
    let output = args
        .output
        .clone()
        .or(file.output)
        .ok_or_else(|| CliError::new("--output is required (or `output` in the config file)"))?;
    let variant = match args.variant.or(file.variant) {
        Some(VariantArg::Baseline) => Variant::Baseline,
        _ => Variant::Scaling,
    };
    let lengths = lengths
        .map(<[usize]>::to_vec)
        .or(file.lengths)
        .unwrap_or_else(|| SWEEP_LENGTHS.to_vec());
    if let Some(k) = lengths.iter().find(|k| *k % 2 == 0) {
        return Err(CliError::new(format!("sweep lengths must be odd, got {k}")));
    }

    let model = ScalingNetConfig {
        // channel count is taken from the dataset once it is loaded
        num_channels: model_defaults.num_channels,
        weight_length,
        conv_filters: args
            .filters
            .clone()
            .or(file.filters)
            .unwrap_or(model_defaults.conv_filters.clone()),
        shared_scaling: args.shared_scaling || file.shared_scaling.unwrap_or(false),
        max_levels: args.max_levels.or(file.max_levels),
        ..model_defaults
    };
    let train = TrainOptions {
        epochs: args.epochs.or(file.epochs).unwrap_or(train_defaults.epochs),
        batch_size: args.batch_size.or(file.batch_size).unwrap_or(train_defaults.batch_size),
        adam: AdamConfig {
            lr: args.lr.or(file.lr).unwrap_or(train_defaults.adam.lr),
            ..AdamConfig::default()
        },
        seed: seed.unwrap_or(0),
        folds,
        strict: args.strict || file.strict.unwrap_or(false),
        patience: args.patience.or(file.patience),
    };
    train.validate().map_err(CliError::from)?;
    Ok(Resolved {
        data,
        read,
        targets,
        model,
        variant,
        train,
        output,
        lengths,
    })
}
