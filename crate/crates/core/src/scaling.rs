//! The scaling layer.
//!
//! One learned odd-length base kernel is repeatedly downsampled by
//! [`avgpool_halve`](crate::numerics::avgpool_halve) to form a pyramid of
//! kernels. Each pyramid level is correlated with the input signal, offset by
//! a per-level scalar bias and passed through the activation. The rows are
//! stacked, level 0 (the base kernel) first, into a `(levels, T)` feature map.
//!
//! The pyramid is rebuilt from the base kernel on every call, so the only
//! trainable state is `weight` and `biases`.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    avgpool_halve_backward_acc, avgpool_halve_slice, correlate_same_acc,
    correlate_same_backward_acc, pooled_len, relu_inplace, relu_mask_inplace, Tensor,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    pub(crate) fn apply(self, x: &mut [f64]) {
        if self == Activation::Relu {
            relu_inplace(x);
        }
    }

    pub(crate) fn backward(self, pre: &[f64], grad: &mut [f64]) {
        if self == Activation::Relu {
            relu_mask_inplace(pre, grad);
        }
    }

    pub(crate) fn code(self) -> u32 {
        match self {
            Activation::Relu => 0,
            Activation::Identity => 1,
        }
    }

    pub(crate) fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Kernel lengths of the full pyramid starting at `k0`, ending at 1.
pub fn kernel_lengths(k0: usize) -> Result<Vec<usize>> {
    if k0 % 2 == 0 {
        return Err(Error::EvenKernel {
            op: "kernel_lengths",
            len: k0,
        });
    }
    let mut lens = vec![k0];
    while let Some(n) = pooled_len(*lens.last().unwrap()) {
        lens.push(n);
    }
    Ok(lens)
}

/// Number of downsampling steps that take a length-`k0` kernel to length 1.
pub fn max_scaling_level(k0: usize) -> Result<usize> {
    Ok(kernel_lengths(k0)?.len() - 1)
}

/// `weight` downsampled `level` times.
pub fn scaled_kernel(weight: &Tensor, level: usize) -> Result<Tensor> {
    weight.expect_rank("scaled_kernel", 1)?;
    let max = max_scaling_level(weight.len())?;
    if level > max {
        return Err(Error::LevelOutOfRange { level, max });
    }
    let mut k = weight.data().to_vec();
    for _ in 0..level {
        k = avgpool_halve_slice(&k);
    }
    Tensor::vector(k)
}

/// The first `levels` kernels of the pyramid built from `weight`.
pub(crate) fn kernel_pyramid(weight: &[f64], levels: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(levels);
    out.push(weight.to_vec());
    while out.len() < levels {
        let next = avgpool_halve_slice(out.last().unwrap());
        out.push(next);
    }
    out
}

/// Row-wise forward of a bank of kernels: `pre[l] = bias[l] + corr(signal, kernels[l])`,
/// `out[l] = act(pre[l])`. Both buffers are `(levels, T)` row-major.
pub(crate) fn bank_forward(
    signal: &[f64],
    kernels: &[Vec<f64>],
    biases: &[f64],
    activation: Activation,
    pre: &mut [f64],
    out: &mut [f64],
) {
    let t = signal.len();
    for (l, kernel) in kernels.iter().enumerate() {
        let row = &mut pre[l * t..(l + 1) * t];
        row.fill(biases[l]);
        correlate_same_acc(signal, kernel, row);
    }
    out.copy_from_slice(pre);
    activation.apply(out);
}

/// Backward of [`bank_forward`]. `upstream` is overwritten with the
/// pre-activation gradient.
pub(crate) fn bank_backward(
    signal: &[f64],
    kernels: &[Vec<f64>],
    activation: Activation,
    pre: &[f64],
    upstream: &mut [f64],
    grad_kernels: &mut [Vec<f64>],
    grad_biases: &mut [f64],
    mut grad_signal: Option<&mut [f64]>,
) {
    let t = signal.len();
    activation.backward(pre, upstream);
    for (l, kernel) in kernels.iter().enumerate() {
        let g = &upstream[l * t..(l + 1) * t];
        grad_biases[l] += g.iter().sum::<f64>();
        correlate_same_backward_acc(
            signal,
            kernel,
            g,
            grad_signal.as_deref_mut(),
            &mut grad_kernels[l],
        );
    }
}

/// Folds per-level kernel gradients back onto the base kernel through the
/// transposed pooling chain.
pub(crate) fn fold_pyramid_gradient(level_grads: &[Vec<f64>]) -> Vec<f64> {
    let mut acc = level_grads.last().unwrap().clone();
    for l in (0..level_grads.len() - 1).rev() {
        let mut below = level_grads[l].clone();
        avgpool_halve_backward_acc(&acc, &mut below);
        acc = below;
    }
    acc
}

/// Trainable state of one scaling layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingLayerParams {
    pub weight: Tensor,
    pub biases: Tensor,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingGradients {
    pub weight: Tensor,
    pub biases: Tensor,
    pub signal: Tensor,
}

impl ScalingLayerParams {
    /// Validates that `weight` is odd-length and that there is one bias per
    /// level, for at least one and at most `max_scaling_level + 1` levels.
    pub fn new(weight: Tensor, biases: Tensor, activation: Activation) -> Result<Self> {
        weight.expect_rank("scaling_layer", 1)?;
        biases.expect_rank("scaling_layer", 1)?;
        let max = max_scaling_level(weight.len())?;
        if biases.len() > max + 1 {
            return Err(Error::LevelOutOfRange {
                level: biases.len() - 1,
                max,
            });
        }
        Ok(Self {
            weight,
            biases,
            activation,
        })
    }

    /// Uniform `[-1/√k0, 1/√k0]` base kernel, zero biases, all levels.
    pub fn init<R: Rng + ?Sized>(k0: usize, activation: Activation, rng: &mut R) -> Result<Self> {
        let levels = max_scaling_level(k0)? + 1;
        Self::init_with_levels(k0, levels, activation, rng)
    }

    /// As [`init`](Self::init) but keeping only the first `levels` levels.
    pub fn init_with_levels<R: Rng + ?Sized>(
        k0: usize,
        levels: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let max = max_scaling_level(k0)?;
        if levels == 0 || levels > max + 1 {
            return Err(Error::LevelOutOfRange {
                level: levels.saturating_sub(1),
                max,
            });
        }
        let bound = 1.0 / (k0 as f64).sqrt();
        let weight = (0..k0).map(|_| rng.random_range(-bound..=bound)).collect();
        Self::new(
            Tensor::vector(weight)?,
            Tensor::zeros(&[levels]),
            activation,
        )
    }

    pub fn levels(&self) -> usize {
        self.biases.len()
    }

    pub fn kernel_len(&self) -> usize {
        self.weight.len()
    }

    pub fn pyramid(&self) -> Vec<Vec<f64>> {
        kernel_pyramid(self.weight.data(), self.levels())
    }

    pub fn forward(&self, signal: &Tensor) -> Result<FeatureMap> {
        let t = check_signal(signal)?;
        let mut pre = vec![0.0; self.levels() * t];
        let mut out = vec![0.0; self.levels() * t];
        bank_forward(
            signal.data(),
            &self.pyramid(),
            self.biases.data(),
            self.activation,
            &mut pre,
            &mut out,
        );
        FeatureMap::new(Tensor::new(vec![self.levels(), t], out)?)
    }

    pub fn backward(&self, signal: &Tensor, upstream: &Tensor) -> Result<ScalingGradients> {
        let t = check_signal(signal)?;
        upstream.expect_shape("scaling_backward", &[self.levels(), t])?;
        let pyramid = self.pyramid();
        let mut pre = vec![0.0; self.levels() * t];
        let mut out = vec![0.0; self.levels() * t];
        bank_forward(
            signal.data(),
            &pyramid,
            self.biases.data(),
            self.activation,
            &mut pre,
            &mut out,
        );
        let mut up = upstream.data().to_vec();
        let mut gk: Vec<Vec<f64>> = pyramid.iter().map(|k| vec![0.0; k.len()]).collect();
        let mut gb = vec![0.0; self.levels()];
        let mut gs = vec![0.0; t];
        bank_backward(
            signal.data(),
            &pyramid,
            self.activation,
            &pre,
            &mut up,
            &mut gk,
            &mut gb,
            Some(&mut gs),
        );
        Ok(ScalingGradients {
            weight: Tensor::vector(fold_pyramid_gradient(&gk))?,
            biases: Tensor::vector(gb)?,
            signal: Tensor::vector(gs)?,
        })
    }
}

fn check_signal(signal: &Tensor) -> Result<usize> {
    signal.expect_rank("scaling_forward", 1)?;
    Ok(signal.len())
}

/// `(levels, T)` activations of a scaling layer for one signal.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    values: Tensor,
}

impl FeatureMap {
    pub fn new(values: Tensor) -> Result<Self> {
        values.expect_rank("feature_map", 2)?;
        Ok(Self { values })
    }

    pub fn levels(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn samples(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn row(&self, level: usize) -> &[f64] {
        let t = self.samples();
        &self.values.data()[level * t..(level + 1) * t]
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn into_tensor(self) -> Tensor {
        self.values
    }

    /// One line per level, comma-separated samples.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for l in 0..self.levels() {
            let line: Vec<String> = self.row(l).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// Binary 8-bit graymap (P5), min-max normalised over the whole map.
    /// Level 0 is the top row. A constant map renders as all zeros.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let data = self.values.data();
        let min = data.iter().copied().fold(f64::INFINITY, f64::min);
        let max = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = max - min;
        writeln!(w, "P5")?;
        writeln!(w, "# min-max normalized per map: min={min} max={max}")?;
        writeln!(w, "{} {}", self.samples(), self.levels())?;
        writeln!(w, "255")?;
        let bytes: Vec<u8> = data
            .iter()
            .map(|&v| {
                if span > 0.0 {
                    ((v - min) / span * 255.0).round().clamp(0.0, 255.0) as u8
                } else {
                    0
                }
            })
            .collect();
        w.write_all(&bytes)
    }
}
