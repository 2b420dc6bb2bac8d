//! Run reports: a structured JSON form with stable keys, and a plain-text
//! table form. Neither contains timestamps, so identical runs produce
//! identical bytes.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::TrainOptions;
use crate::data::{Dataset, Target};
use crate::model::{ScalingNetConfig, Variant};

pub const RUN_REPORT_SCHEMA: &str = "scalingnet.run-report.v1";
pub const SWEEP_REPORT_SCHEMA: &str = "scalingnet.sweep-report.v1";
pub const ABLATION_REPORT_SCHEMA: &str = "scalingnet.ablation-report.v1";

/// Published DEAP-scale accuracies (arousal, valence, dominance) for context.
pub const REFERENCE_BASELINE: [f64; 3] = [0.6574, 0.6641, 0.6628];
pub const REFERENCE_SCALING: [f64; 3] = [0.6999, 0.7113, 0.7078];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub accuracy: f64,
    pub loss_curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetReport {
    pub target: Target,
    pub split_fingerprint: String,
    pub folds: Vec<FoldReport>,
    /// Arithmetic mean of the fold accuracies.
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEcho {
    pub source: String,
    pub records: usize,
    pub channels: usize,
    pub samples: usize,
    pub sample_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub variant: Variant,
    pub dataset: DatasetEcho,
    pub model: ScalingNetConfig,
    pub training: TrainOptions,
    pub targets: Vec<TargetReport>,
}

impl RunReport {
    pub fn new(
        dataset: &Dataset,
        config: &ScalingNetConfig,
        variant: Variant,
        opts: &TrainOptions,
        targets: Vec<TargetReport>,
    ) -> Self {
        let m = &dataset.manifest;
        Self {
            schema: RUN_REPORT_SCHEMA.into(),
            variant,
            dataset: DatasetEcho {
                source: m.source.clone(),
                records: m.num_records,
                channels: m.num_channels,
                samples: m.num_samples,
                sample_rate: m.sample_rate,
            },
            model: config.clone(),
            training: opts.clone(),
            targets,
        }
    }

    pub fn target(&self, target: Target) -> Option<&TargetReport> {
        self.targets.iter().find(|t| t.target == target)
    }

    pub fn mean_accuracy(&self, target: Target) -> Option<f64> {
        self.target(target).map(|t| t.mean_accuracy)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn header_lines(&self) -> String {
        let c = &self.model;
        let t = &self.training;
        let filters: Vec<String> = c.conv_filters.iter().map(ToString::to_string).collect();
        let mut s = String::new();
        let _ = writeln!(
            s,
            "dataset: {} ({} records, {} channels x {} samples @ {} Hz)",
            self.dataset.source,
            self.dataset.records,
            self.dataset.channels,
            self.dataset.samples,
            self.dataset.sample_rate
        );
        let _ = writeln!(
            s,
            "model: variant {:?} | length of weight {} | levels {} | kernel size {}x{} | filters {} | activation {:?} | shared {}",
            self.variant,
            c.weight_length,
            c.levels(),
            c.conv_kernel.0,
            c.conv_kernel.1,
            filters.join(", "),
            c.activation,
            c.shared_scaling
        );
        let _ = writeln!(
            s,
            "training: batch size {} | epochs {} | lr {} | folds {} | seed {} | strict {} | loss cross entropy | optimizer adam",
            t.batch_size, t.epochs, t.adam.lr, t.folds, t.seed, t.strict
        );
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("ScalingNet run report\n{}\n", self.header_lines());
        let folds = self.training.folds;
        let _ = write!(s, "{:<10}", "target");
        for k in 0..folds {
            let _ = write!(s, " {:>8}", format!("fold {k}"));
        }
        let _ = writeln!(s, " {:>8}", "mean");
        for t in &self.targets {
            let _ = write!(s, "{:<10}", t.target.name());
            for f in &t.folds {
                let _ = write!(s, " {:>8.4}", f.accuracy);
            }
            let _ = writeln!(s, " {:>8.4}", t.mean_accuracy);
        }
        for t in &self.targets {
            let _ = writeln!(s, "split {}: {}", t.target.name(), t.split_fingerprint);
        }
        s
    }
}

fn accuracy_cell(report: &RunReport, target: Target) -> String {
    report
        .mean_accuracy(target)
        .map_or_else(|| "-".to_string(), |a| format!("{a:.4}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub weight_length: usize,
    pub levels: usize,
    pub report: RunReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn to_json(&self) -> String {
        let value = serde_json::json!({
            "schema": SWEEP_REPORT_SCHEMA,
            "rows": self.rows,
        });
        serde_json::to_string_pretty(&value).expect("report serializes") + "\n"
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("Length of weight vs. accuracy\n");
        let _ = writeln!(
            s,
            "{:>8} {:>7} {:>9} {:>9} {:>10}",
            "length", "levels", "arousal", "valence", "dominance"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>8} {:>7} {:>9} {:>9} {:>10}",
                r.weight_length,
                r.levels,
                accuracy_cell(&r.report, Target::Arousal),
                accuracy_cell(&r.report, Target::Valence),
                accuracy_cell(&r.report, Target::Dominance)
            );
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub scaling: RunReport,
    pub baseline: RunReport,
    /// Per-target split fingerprints agree between the two variants.
    pub fingerprints_match: bool,
}

impl AblationReport {
    pub fn new(scaling: RunReport, baseline: RunReport) -> Self {
        let fingerprints_match = scaling.targets.len() == baseline.targets.len()
            && scaling
                .targets
                .iter()
                .zip(&baseline.targets)
                .all(|(a, b)| a.target == b.target && a.split_fingerprint == b.split_fingerprint);
        Self {
            scaling,
            baseline,
            fingerprints_match,
        }
    }

    pub fn to_json(&self) -> String {
        let value = serde_json::json!({
            "schema": ABLATION_REPORT_SCHEMA,
            "fingerprints_match": self.fingerprints_match,
            "rows": [
                {"feature_extractor": "convolutional layer", "report": self.baseline},
                {"feature_extractor": "scaling layer", "report": self.scaling},
            ],
            "reference": {
                "convolutional layer": REFERENCE_BASELINE,
                "scaling layer": REFERENCE_SCALING,
            },
        });
        serde_json::to_string_pretty(&value).expect("report serializes") + "\n"
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("Ablation (same backend)\n{}\n", self.scaling.header_lines());
        let _ = writeln!(
            s,
            "{:<20} {:>9} {:>9} {:>10}",
            "feature extractor", "arousal", "valence", "dominance"
        );
        for (name, r) in [("convolutional layer", &self.baseline), ("scaling layer", &self.scaling)] {
            let _ = writeln!(
                s,
                "{:<20} {:>9} {:>9} {:>10}",
                name,
                accuracy_cell(r, Target::Arousal),
                accuracy_cell(r, Target::Valence),
                accuracy_cell(r, Target::Dominance)
            );
        }
        let _ = writeln!(
            s,
            "split fingerprints: {}",
            if self.fingerprints_match { "identical" } else { "DIFFER" }
        );
        let fmt = |v: [f64; 3]| format!("{:.4} / {:.4} / {:.4}", v[0], v[1], v[2]);
        let _ = writeln!(
            s,
            "reference (published, DEAP scale): convolutional layer {}; scaling layer {}",
            fmt(REFERENCE_BASELINE),
            fmt(REFERENCE_SCALING)
        );
        s
    }
}
