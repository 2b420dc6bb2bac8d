use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("invalid tensor shape {shape:?} for {len} values")]
    InvalidShape { shape: Vec<usize>, len: usize },

    #[error("{op}: kernel length {len} must be odd")]
    EvenKernel { op: &'static str, len: usize },

    #[error("{op}: empty input")]
    EmptyInput { op: &'static str },

    #[error("avgpool_halve: kernel of length 1 cannot be downsampled further")]
    KernelExhausted,

    #[error("scaling level {level} out of range 0..={max}")]
    LevelOutOfRange { level: usize, max: usize },

    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },

    #[error("rating {0} outside [1, 9]")]
    RatingOutOfRange(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}: field `{field}`: {reason}", path.display())]
    Format {
        path: PathBuf,
        field: String,
        reason: String,
    },

    #[error("class {class} has {count} members, fewer than {folds} folds")]
    InsufficientClass {
        class: usize,
        count: usize,
        folds: usize,
    },

    #[error("non-finite loss at epoch {epoch}, batch {batch} (trials {trials:?})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        trials: Vec<usize>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, expected: &[usize], actual: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable tag for the error kind.
    pub fn reason_code(&self) -> &'static str {
        match self {
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::InvalidShape { .. } => "invalid_shape",
            Error::EvenKernel { .. } => "even_kernel",
            Error::EmptyInput { .. } => "empty_input",
            Error::KernelExhausted => "kernel_exhausted",
            Error::LevelOutOfRange { .. } => "level_out_of_range",
            Error::ClassOutOfRange { .. } => "class_out_of_range",
            Error::RatingOutOfRange(_) => "rating_out_of_range",
            Error::Config(_) => "config",
            Error::Format { .. } => "format",
            Error::InsufficientClass { .. } => "insufficient_class",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::Io { .. } => "io",
        }
    }
}
