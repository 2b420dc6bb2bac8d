//! Scaling layer and ScalingNet.
//!
//! A scaling layer turns a raw 1D signal into a `(levels, T)` feature map by
//! correlating it with a pyramid of kernels derived from one learned base
//! kernel. ScalingNet applies one such layer per EEG channel and classifies
//! the stacked maps with a small convolutional backend.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod model;
pub mod numerics;
pub mod scaling;
pub mod training;
pub mod verify;

pub use error::{Error, Result};
pub use model::{build_baseline, FrontEnd, KernelBank, ScalingNetConfig, ScalingNetParams, Variant};
pub use numerics::Tensor;
pub use scaling::{Activation, FeatureMap, ScalingLayerParams};
