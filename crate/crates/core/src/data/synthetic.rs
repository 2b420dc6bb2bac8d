//! Seeded two-class frequency-discrimination data.
//!
//! Class 0 trials are sums of sinusoids drawn from 4–8 Hz, class 1 from
//! 20–30 Hz. Frequencies are drawn per trial, phases per channel, and each
//! channel is scaled to unit RMS before Gaussian noise of standard deviation
//! `1 / snr` is added. Samples are rounded to `f32` precision so a dataset
//! survives a round trip through the intermediate file format unchanged.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Dataset, Ratings, TrialRecord};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const LOW_BAND: (f64, f64) = (4.0, 8.0);
pub const HIGH_BAND: (f64, f64) = (20.0, 30.0);
const TRIALS_PER_SUBJECT: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub num_trials: usize,
    pub num_channels: usize,
    pub num_samples: usize,
    pub sample_rate: f64,
    /// Sinusoids summed per trial.
    pub components: usize,
    /// Signal RMS to noise standard deviation.
    pub snr: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_trials: 400,
            num_channels: 4,
            num_samples: 512,
            sample_rate: 128.0,
            components: 3,
            snr: 2.0,
        }
    }
}

/// Ratings carried by synthetic trials of each class, on every target.
pub fn class_ratings(class: usize) -> Ratings {
    let r = if class == 0 { 2.0 } else { 8.0 };
    Ratings {
        valence: r,
        arousal: r,
        dominance: r,
        liking: 5.0,
    }
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Dataset> {
    if cfg.num_trials == 0 || cfg.num_trials % 2 == 1 {
        return Err(Error::Config(format!(
            "synthetic trial count must be even and positive, got {}",
            cfg.num_trials
        )));
    }
    if cfg.num_channels == 0 || cfg.num_samples == 0 || cfg.components == 0 {
        return Err(Error::Config(
            "channels, samples and components must be positive".into(),
        ));
    }
    if !(cfg.snr > 0.0 && cfg.sample_rate > 0.0) {
        return Err(Error::Config("snr and sample rate must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut classes: Vec<usize> = (0..cfg.num_trials).map(|i| i % 2).collect();
    classes.shuffle(&mut rng);
    let noise = Normal::new(0.0, 1.0 / cfg.snr).expect("positive std");

    let records = classes
        .iter()
        .enumerate()
        .map(|(i, &class)| {
            let (lo, hi) = if class == 0 { LOW_BAND } else { HIGH_BAND };
            let freqs: Vec<f64> = (0..cfg.components)
                .map(|_| rng.random_range(lo..=hi))
                .collect();
            let mut data = Vec::with_capacity(cfg.num_channels * cfg.num_samples);
            for _ in 0..cfg.num_channels {
                let phases: Vec<f64> = (0..cfg.components)
                    .map(|_| rng.random_range(0.0..2.0 * PI))
                    .collect();
                let clean: Vec<f64> = (0..cfg.num_samples)
                    .map(|n| {
                        let t = n as f64 / cfg.sample_rate;
                        freqs
                            .iter()
                            .zip(&phases)
                            .map(|(f, p)| (2.0 * PI * f * t + p).sin())
                            .sum()
                    })
                    .collect();
                let rms = (clean.iter().map(|x| x * x).sum::<f64>() / clean.len() as f64).sqrt();
                let scale = if rms > 0.0 { 1.0 / rms } else { 1.0 };
                for x in clean {
                    let v = x * scale + noise.sample(&mut rng);
                    data.push(f64::from(v as f32));
                }
            }
            Ok(TrialRecord {
                subject_id: (i / TRIALS_PER_SUBJECT) as u32 + 1,
                trial_id: (i % TRIALS_PER_SUBJECT) as u32 + 1,
                signals: Tensor::new(vec![cfg.num_channels, cfg.num_samples], data)?,
                ratings: class_ratings(class),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(
        records,
        format!(
            "synthetic(seed={}, trials={}, channels={}, samples={}, snr={})",
            cfg.seed, cfg.num_trials, cfg.num_channels, cfg.num_samples, cfg.snr
        ),
        cfg.sample_rate,
    )
}
