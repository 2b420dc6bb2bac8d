//! Minibatch Adam training, k-fold cross-validation, and the weight-length
//! sweep and ablation harnesses built on top of it.

mod adam;
mod folds;
pub mod report;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Target};
use crate::error::{Error, Result};
use crate::model::{argmax, ScalingNetConfig, ScalingNetParams, Variant};
use crate::scaling::kernel_lengths;

pub use adam::{AdamConfig, AdamState};
pub use folds::{five_fold_split, stratified_k_fold, Fold, FoldSplit};
pub use report::{AblationReport, FoldReport, RunReport, SweepReport, SweepRow, TargetReport};

/// Weight lengths sampled by the capacity sweep.
pub const SWEEP_LENGTHS: [usize; 5] = [129, 65, 63, 33, 17];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub folds: usize,
    /// Sum per-trial gradients in trial order instead of a parallel tree.
    pub strict: bool,
    /// Stop once the epoch loss has not improved for this many epochs.
    pub patience: Option<usize>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            adam: AdamConfig::default(),
            seed: 0,
            folds: 5,
            strict: false,
            patience: None,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!("folds must be at least 2, got {}", self.folds)));
        }
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.adam.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ScalingNetParams,
    /// Mean training loss per epoch.
    pub loss_curve: Vec<f64>,
}

/// Seed for fold `fold` of a run seeded with `seed`.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed ^ fold as u64
}

fn batch_gradient(
    params: &ScalingNetParams,
    dataset: &Dataset,
    batch: &[usize],
    labels: &[usize],
    strict: bool,
) -> Result<(Vec<f64>, ScalingNetParams)> {
    let per_trial = |&i: &usize| params.loss_and_grad(&dataset.records[i].signals, labels[i]);
    if strict {
        let results: Vec<(f64, ScalingNetParams)> =
            batch.par_iter().map(per_trial).collect::<Result<_>>()?;
        let mut total = params.zeros_like();
        let mut losses = Vec::with_capacity(batch.len());
        for (loss, g) in &results {
            total.add_scaled(1.0, g)?;
            losses.push(*loss);
        }
        Ok((losses, total))
    } else {
        batch
            .par_iter()
            .map(|i| per_trial(i).map(|(l, g)| (vec![l], g)))
            .try_reduce_with(|(mut la, mut ga), (lb, gb)| {
                ga.add_scaled(1.0, &gb)?;
                la.extend(lb);
                Ok((la, ga))
            })
            .unwrap_or_else(|| Ok((Vec::new(), params.zeros_like())))
    }
}

/// Trains `params` on `train` indices of `dataset` with minibatch Adam on
/// softmax cross entropy. Trials are reshuffled every epoch from `seed`.
pub fn train_model(
    mut params: ScalingNetParams,
    dataset: &Dataset,
    train: &[usize],
    target: Target,
    opts: &TrainOptions,
    seed: u64,
) -> Result<TrainOutcome> {
    opts.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyInput { op: "train_model" });
    }
    let labels = dataset.labels(target)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut adam = AdamState::new(opts.adam, &params.tensors());
    let mut order = train.to_vec();
    let mut loss_curve = Vec::with_capacity(opts.epochs);
    let mut best = f64::INFINITY;
    let mut stale = 0;

    for epoch in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(opts.batch_size).enumerate() {
            let (losses, mut grad) = batch_gradient(&params, dataset, batch, &labels, opts.strict)?;
            if losses.iter().any(|l| !l.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    trials: batch.to_vec(),
                });
            }
            epoch_loss += losses.iter().sum::<f64>();
            for t in grad.tensors_mut() {
                t.scale(1.0 / batch.len() as f64);
            }
            let grads = grad.tensors();
            adam.step(&mut params.tensors_mut(), &grads)?;
        }
        let mean = epoch_loss / order.len() as f64;
        loss_curve.push(mean);
        if let Some(patience) = opts.patience {
            if mean < best {
                best = mean;
                stale = 0;
            } else {
                stale += 1;
                if stale >= patience {
                    break;
                }
            }
        }
    }
    Ok(TrainOutcome { params, loss_curve })
}

/// Fraction of `indices` whose predicted class equals the binarized label.
pub fn evaluate(
    params: &ScalingNetParams,
    dataset: &Dataset,
    indices: &[usize],
    target: Target,
) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::EmptyInput { op: "evaluate" });
    }
    let labels = dataset.labels(target)?;
    let correct: usize = indices
        .par_iter()
        .map(|&i| {
            let logits = params.forward(&dataset.records[i].signals)?;
            Ok(usize::from(argmax(logits.data()) == labels[i]))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(correct as f64 / indices.len() as f64)
}

#[derive(Debug, Clone)]
pub struct TargetRun {
    pub report: TargetReport,
    /// Trained parameters of each fold.
    pub models: Vec<ScalingNetParams>,
}

/// Full k-fold protocol for one target.
pub fn cross_validate(
    dataset: &Dataset,
    config: &ScalingNetConfig,
    variant: Variant,
    target: Target,
    opts: &TrainOptions,
) -> Result<TargetRun> {
    opts.validate()?;
    config.validate()?;
    if config.num_channels != dataset.manifest.num_channels {
        return Err(Error::Config(format!(
            "model expects {} channels, dataset has {}",
            config.num_channels, dataset.manifest.num_channels
        )));
    }
    let labels = dataset.labels(target)?;
    let split = stratified_k_fold(&labels, opts.folds, opts.seed)?;
    let mut folds = Vec::with_capacity(split.folds.len());
    let mut models = Vec::with_capacity(split.folds.len());
    for (k, fold) in split.folds.iter().enumerate() {
        let seed = fold_seed(opts.seed, k);
        let init = ScalingNetParams::init_variant(config, variant, seed)?;
        let out = train_model(init, dataset, &fold.train, target, opts, seed)?;
        let accuracy = evaluate(&out.params, dataset, &fold.test, target)?;
        folds.push(FoldReport {
            fold: k,
            train_size: fold.train.len(),
            test_size: fold.test.len(),
            accuracy,
            loss_curve: out.loss_curve,
        });
        models.push(out.params);
    }
    let mean_accuracy = folds.iter().map(|f| f.accuracy).sum::<f64>() / folds.len() as f64;
    Ok(TargetRun {
        report: TargetReport {
            target,
            split_fingerprint: split.fingerprint(),
            folds,
            mean_accuracy,
        },
        models,
    })
}

/// Cross-validates every target in `targets` and collects a [`RunReport`].
pub fn run_protocol(
    dataset: &Dataset,
    config: &ScalingNetConfig,
    variant: Variant,
    targets: &[Target],
    opts: &TrainOptions,
) -> Result<(RunReport, Vec<TargetRun>)> {
    let runs = targets
        .iter()
        .map(|&t| cross_validate(dataset, config, variant, t, opts))
        .collect::<Result<Vec<_>>>()?;
    let report = RunReport::new(
        dataset,
        config,
        variant,
        opts,
        runs.iter().map(|r| r.report.clone()).collect(),
    );
    Ok((report, runs))
}

/// Runs the full protocol once per weight length; rows sorted by length,
/// longest first.
pub fn sweep_weight_length(
    dataset: &Dataset,
    base: &ScalingNetConfig,
    lengths: &[usize],
    targets: &[Target],
    opts: &TrainOptions,
) -> Result<SweepReport> {
    for &k in lengths {
        kernel_lengths(k)?;
    }
    let mut sorted = lengths.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    sorted.dedup();
    let rows = sorted
        .into_iter()
        .map(|k| {
            let config = ScalingNetConfig {
                weight_length: k,
                ..base.clone()
            };
            let (report, _) = run_protocol(dataset, &config, Variant::Scaling, targets, opts)?;
            Ok(SweepRow {
                weight_length: k,
                levels: config.levels(),
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport { rows })
}

/// Trains the scaling variant and the plain-kernel baseline under identical
/// seeds, splits and epochs.
pub fn ablate(
    dataset: &Dataset,
    config: &ScalingNetConfig,
    targets: &[Target],
    opts: &TrainOptions,
) -> Result<AblationReport> {
    let (scaling, _) = run_protocol(dataset, config, Variant::Scaling, targets, opts)?;
    let (baseline, _) = run_protocol(dataset, config, Variant::Baseline, targets, opts)?;
    Ok(AblationReport::new(scaling, baseline))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticConfig};

    fn tiny() -> (Dataset, ScalingNetConfig) {
        let ds = generate_synthetic(&SyntheticConfig {
            seed: 1,
            num_trials: 20,
            num_channels: 2,
            num_samples: 48,
            ..Default::default()
        })
        .unwrap();
        let cfg = ScalingNetConfig {
            num_channels: 2,
            weight_length: 9,
            conv_filters: vec![3, 2],
            ..Default::default()
        };
        (ds, cfg)
    }

    #[test]
    fn zero_epochs_returns_initialisation() {
        let (ds, cfg) = tiny();
        let init = ScalingNetParams::init(&cfg, 3).unwrap();
        let opts = TrainOptions {
            epochs: 0,
            ..Default::default()
        };
        let idx: Vec<usize> = (0..ds.len()).collect();
        let out = train_model(init.clone(), &ds, &idx, Target::Valence, &opts, 3).unwrap();
        assert_eq!(out.params, init);
        assert!(out.loss_curve.is_empty());
    }

    #[test]
    fn strict_and_parallel_agree_closely() {
        let (ds, cfg) = tiny();
        let idx: Vec<usize> = (0..ds.len()).collect();
        let run = |strict| {
            let opts = TrainOptions {
                epochs: 2,
                batch_size: 8,
                strict,
                ..Default::default()
            };
            let init = ScalingNetParams::init(&cfg, 0).unwrap();
            train_model(init, &ds, &idx, Target::Arousal, &opts, 0).unwrap()
        };
        let (a, b) = (run(true), run(false));
        for (x, y) in a.params.flatten().iter().zip(b.params.flatten()) {
            assert!((x - y).abs() < 1e-9);
        }
        assert_eq!(run(true).params, a.params);
    }

    #[test]
    fn patience_stops_early() {
        let (ds, cfg) = tiny();
        let idx: Vec<usize> = (0..ds.len()).collect();
        let opts = TrainOptions {
            epochs: 40,
            patience: Some(1),
            adam: AdamConfig {
                lr: 0.5,
                ..Default::default()
            },
            ..Default::default()
        };
        let init = ScalingNetParams::init(&cfg, 0).unwrap();
        let out = train_model(init, &ds, &idx, Target::Arousal, &opts, 0).unwrap();
        assert!(out.loss_curve.len() < 40);
    }

    #[test]
    fn sweep_rejects_even_length() {
        let (ds, cfg) = tiny();
        let err = sweep_weight_length(&ds, &cfg, &[9, 8], &[Target::Valence], &TrainOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::EvenKernel { len: 8, .. }));
    }

    #[test]
    fn channel_mismatch_rejected() {
        let (ds, mut cfg) = tiny();
        cfg.num_channels = 3;
        let err = cross_validate(&ds, &cfg, Variant::Scaling, Target::Valence, &TrainOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
