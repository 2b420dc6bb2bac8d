//! Trials, labels and datasets.
//!
//! Two sources produce a [`Dataset`]: the per-subject intermediate file
//! format in [`intermediate`] (what DEAP recordings are converted to), and
//! the seeded sinusoid generator in [`synthetic`].

pub mod intermediate;
pub mod synthetic;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub use intermediate::{read_dataset, read_subject_file, write_dataset, Layout, ReadOptions};
pub use synthetic::{generate_synthetic, SyntheticConfig};

/// Ratings strictly above this value are the high class.
pub const RATING_THRESHOLD: f64 = 5.0;

/// Leading pre-trial baseline in DEAP recordings: 3 s at 128 Hz.
pub const DEAP_BASELINE_SAMPLES: usize = 384;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Arousal,
    Valence,
    Dominance,
}

impl Target {
    /// Report column order.
    pub const ALL: [Target; 3] = [Target::Arousal, Target::Valence, Target::Dominance];

    pub fn name(self) -> &'static str {
        match self {
            Target::Arousal => "arousal",
            Target::Valence => "valence",
            Target::Dominance => "dominance",
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "arousal" => Ok(Target::Arousal),
            "valence" => Ok(Target::Valence),
            "dominance" => Ok(Target::Dominance),
            other => Err(Error::Config(format!(
                "unknown target `{other}` (expected arousal, valence or dominance)"
            ))),
        }
    }
}

/// Class of a rating: 1 if `rating > 5`, else 0. A rating of exactly 5 is low.
pub fn binarize_label(rating: f64) -> Result<usize> {
    if !(1.0..=9.0).contains(&rating) {
        return Err(Error::RatingOutOfRange(rating));
    }
    Ok(usize::from(rating > RATING_THRESHOLD))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratings {
    pub valence: f64,
    pub arousal: f64,
    pub dominance: f64,
    pub liking: f64,
}

impl Ratings {
    pub fn get(&self, target: Target) -> f64 {
        match target {
            Target::Arousal => self.arousal,
            Target::Valence => self.valence,
            Target::Dominance => self.dominance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for r in [self.valence, self.arousal, self.dominance, self.liking] {
            if !(1.0..=9.0).contains(&r) {
                return Err(Error::RatingOutOfRange(r));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub subject_id: u32,
    pub trial_id: u32,
    /// `(channels, samples)`.
    pub signals: Tensor,
    pub ratings: Ratings,
}

impl TrialRecord {
    pub fn label(&self, target: Target) -> Result<usize> {
        binarize_label(self.ratings.get(target))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub source: String,
    pub num_subjects: usize,
    pub num_records: usize,
    pub num_channels: usize,
    pub num_samples: usize,
    pub sample_rate: f64,
}

impl fmt::Display for Manifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "source:      {}", self.source)?;
        writeln!(f, "subjects:    {}", self.num_subjects)?;
        writeln!(f, "records:     {}", self.num_records)?;
        writeln!(f, "channels:    {}", self.num_channels)?;
        writeln!(f, "samples:     {}", self.num_samples)?;
        write!(f, "sample rate: {} Hz", self.sample_rate)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<TrialRecord>,
    pub manifest: Manifest,
}

impl Dataset {
    /// Builds a dataset, checking that every record has the same shape and
    /// valid ratings.
    pub fn new(records: Vec<TrialRecord>, source: impl Into<String>, sample_rate: f64) -> Result<Self> {
        let first = records
            .first()
            .ok_or(Error::EmptyInput { op: "dataset" })?;
        let shape = first.signals.shape().to_vec();
        if shape.len() != 2 {
            return Err(Error::shape("dataset", &[0, 0], &shape));
        }
        for r in &records {
            r.signals.expect_shape("dataset", &shape)?;
            r.ratings.validate()?;
        }
        let mut subjects: Vec<u32> = records.iter().map(|r| r.subject_id).collect();
        subjects.sort_unstable();
        subjects.dedup();
        let manifest = Manifest {
            source: source.into(),
            num_subjects: subjects.len(),
            num_records: records.len(),
            num_channels: shape[0],
            num_samples: shape[1],
            sample_rate,
        };
        Ok(Self { records, manifest })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self, target: Target) -> Result<Vec<usize>> {
        self.records.iter().map(|r| r.label(target)).collect()
    }

    /// Drops the first `n` samples of every channel.
    pub fn drop_leading_samples(&mut self, n: usize) -> Result<()> {
        if n == 0 {
            return Ok(());
        }
        let (c, t) = (self.manifest.num_channels, self.manifest.num_samples);
        if n >= t {
            return Err(Error::Config(format!(
                "cannot drop {n} leading samples from trials of {t} samples"
            )));
        }
        for r in &mut self.records {
            let data: Vec<f64> = r
                .signals
                .data()
                .chunks_exact(t)
                .flat_map(|ch| ch[n..].iter().copied())
                .collect();
            r.signals = Tensor::new(vec![c, t - n], data)?;
        }
        self.manifest.num_samples = t - n;
        Ok(())
    }
}
