//! ScalingNet: per-channel scaling layers, stacked into a `(channels, levels, T)`
//! tensor, followed by same-padded conv stages with relu, global average
//! pooling and a linear head.
//!
//! The ablation baseline swaps each scaling layer for a [`KernelBank`] of
//! independent kernels with the same lengths as the scaling pyramid, so the
//! backend sees identically shaped input.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    conv2d_same_backward_acc, conv2d_same_into, relu_inplace, relu_mask_inplace, softmax,
    Conv2dGeometry, Tensor,
};
use crate::scaling::{
    bank_backward, bank_forward, fold_pyramid_gradient, kernel_lengths, Activation, FeatureMap,
    ScalingLayerParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Scaling,
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScalingNetConfig {
    pub num_channels: usize,
    pub weight_length: usize,
    /// `(levels axis, time axis)`.
    pub conv_kernel: (usize, usize),
    pub conv_filters: Vec<usize>,
    pub activation: Activation,
    pub num_classes: usize,
    /// One scaling layer shared by every channel.
    pub shared_scaling: bool,
    /// Keep only the first `n` scaling levels.
    pub max_levels: Option<usize>,
}

impl Default for ScalingNetConfig {
    fn default() -> Self {
        Self {
            num_channels: 32,
            weight_length: 33,
            conv_kernel: (3, 5),
            conv_filters: vec![16, 8, 6],
            activation: Activation::Relu,
            num_classes: 2,
            shared_scaling: false,
            max_levels: None,
        }
    }
}

impl ScalingNetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.num_channels == 0 {
            return bad("num_channels must be positive".into());
        }
        if self.weight_length % 2 == 0 {
            return bad(format!("weight length {} must be odd", self.weight_length));
        }
        let (kh, kw) = self.conv_kernel;
        if kh % 2 == 0 || kw % 2 == 0 {
            return bad(format!("conv kernel {kh}x{kw} must have odd extents"));
        }
        if self.conv_filters.is_empty() || self.conv_filters.contains(&0) {
            return bad("conv_filters must be a non-empty list of positive counts".into());
        }
        if self.num_classes < 2 {
            return bad("num_classes must be at least 2".into());
        }
        if let Some(cap) = self.max_levels {
            let full = kernel_lengths(self.weight_length)?.len();
            if cap == 0 || cap > full {
                return bad(format!("max_levels {cap} outside 1..={full}"));
            }
        }
        Ok(())
    }

    /// Rows of each per-channel feature map.
    pub fn levels(&self) -> usize {
        let full = kernel_lengths(self.weight_length).map_or(1, |l| l.len());
        self.max_levels.map_or(full, |c| c.min(full))
    }

    pub fn kernel_lengths(&self) -> Vec<usize> {
        let mut lens = kernel_lengths(self.weight_length).unwrap_or_else(|_| vec![1]);
        lens.truncate(self.levels());
        lens
    }

    fn front_end_count(&self) -> usize {
        if self.shared_scaling {
            1
        } else {
            self.num_channels
        }
    }
}

/// Independent per-level kernels: the plain-convolution ablation front end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelBank {
    pub kernels: Vec<Tensor>,
    pub biases: Tensor,
    pub activation: Activation,
}

impl KernelBank {
    pub fn init<R: Rng + ?Sized>(lengths: &[usize], activation: Activation, rng: &mut R) -> Self {
        let kernels = lengths
            .iter()
            .map(|&k| {
                let bound = 1.0 / (k as f64).sqrt();
                let data = (0..k).map(|_| rng.random_range(-bound..=bound)).collect();
                Tensor::vector(data).expect("positive kernel length")
            })
            .collect();
        Self {
            kernels,
            biases: Tensor::zeros(&[lengths.len()]),
            activation,
        }
    }

    /// A bank whose kernels are exactly the scaling layer's pyramid.
    pub fn from_scaling(layer: &ScalingLayerParams) -> Self {
        Self {
            kernels: layer
                .pyramid()
                .into_iter()
                .map(|k| Tensor::vector(k).expect("non-empty"))
                .collect(),
            biases: layer.biases.clone(),
            activation: layer.activation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FrontEnd {
    Scaling(ScalingLayerParams),
    Bank(KernelBank),
}

impl FrontEnd {
    fn kernels(&self) -> Vec<Vec<f64>> {
        match self {
            FrontEnd::Scaling(p) => p.pyramid(),
            FrontEnd::Bank(b) => b.kernels.iter().map(|k| k.data().to_vec()).collect(),
        }
    }

    fn biases(&self) -> &Tensor {
        match self {
            FrontEnd::Scaling(p) => &p.biases,
            FrontEnd::Bank(b) => &b.biases,
        }
    }

    fn activation(&self) -> Activation {
        match self {
            FrontEnd::Scaling(p) => p.activation,
            FrontEnd::Bank(b) => b.activation,
        }
    }

    fn tensors(&self) -> Vec<&Tensor> {
        match self {
            FrontEnd::Scaling(p) => vec![&p.weight, &p.biases],
            FrontEnd::Bank(b) => b.kernels.iter().chain(std::iter::once(&b.biases)).collect(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            FrontEnd::Scaling(p) => vec![&mut p.weight, &mut p.biases],
            FrontEnd::Bank(b) => b
                .kernels
                .iter_mut()
                .chain(std::iter::once(&mut b.biases))
                .collect(),
        }
    }

    /// Feature map of a single channel signal.
    pub fn feature_map(&self, signal: &Tensor) -> Result<FeatureMap> {
        signal.expect_rank("feature_map", 1)?;
        let t = signal.len();
        let kernels = self.kernels();
        let mut pre = vec![0.0; kernels.len() * t];
        let mut out = vec![0.0; kernels.len() * t];
        bank_forward(
            signal.data(),
            &kernels,
            self.biases().data(),
            self.activation(),
            &mut pre,
            &mut out,
        );
        FeatureMap::new(Tensor::new(vec![kernels.len(), t], out)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvStage {
    /// `(C_out, C_in, kh, kw)`.
    pub kernels: Tensor,
    pub biases: Tensor,
}

/// All trainable parameters. Also used as the gradient container, with the
/// same layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingNetParams {
    pub config: ScalingNetConfig,
    pub variant: Variant,
    pub front_ends: Vec<FrontEnd>,
    pub stages: Vec<ConvStage>,
    /// `(num_classes, last filter count)`.
    pub head_weights: Tensor,
    pub head_bias: Tensor,
}

pub(crate) struct ForwardCache {
    kernels: Vec<Vec<Vec<f64>>>,
    front_pre: Vec<f64>,
    stacked: Vec<f64>,
    stage_pre: Vec<Vec<f64>>,
    stage_out: Vec<Vec<f64>>,
    pooled: Tensor,
    pub logits: Tensor,
    time: usize,
}

impl ForwardCache {
    /// Sign pattern of every pre-activation, used to detect relu kinks.
    pub(crate) fn activation_pattern(&self) -> Vec<bool> {
        self.front_pre
            .iter()
            .chain(self.stage_pre.iter().flatten())
            .map(|&x| x > 0.0)
            .collect()
    }
}

fn uniform_tensor<R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for x in t.data_mut() {
        *x = rng.random_range(-bound..=bound);
    }
    t
}

impl ScalingNetParams {
    /// Scaling variant, seeded initialisation.
    pub fn init(config: &ScalingNetConfig, seed: u64) -> Result<Self> {
        Self::init_variant(config, Variant::Scaling, seed)
    }

    pub fn init_variant(config: &ScalingNetConfig, variant: Variant, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let levels = config.levels();
        let front_ends = (0..config.front_end_count())
            .map(|_| match variant {
                Variant::Scaling => ScalingLayerParams::init_with_levels(
                    config.weight_length,
                    levels,
                    config.activation,
                    &mut rng,
                )
                .map(FrontEnd::Scaling),
                Variant::Baseline => Ok(FrontEnd::Bank(KernelBank::init(
                    &config.kernel_lengths(),
                    config.activation,
                    &mut rng,
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        let (kh, kw) = config.conv_kernel;
        let mut cin = config.num_channels;
        let mut stages = Vec::with_capacity(config.conv_filters.len());
        for &cout in &config.conv_filters {
            let bound = 1.0 / ((cin * kh * kw) as f64).sqrt();
            stages.push(ConvStage {
                kernels: uniform_tensor(&[cout, cin, kh, kw], bound, &mut rng),
                biases: Tensor::zeros(&[cout]),
            });
            cin = cout;
        }
        let bound = 1.0 / (cin as f64).sqrt();
        Ok(Self {
            config: config.clone(),
            variant,
            front_ends,
            stages,
            head_weights: uniform_tensor(&[config.num_classes, cin], bound, &mut rng),
            head_bias: Tensor::zeros(&[config.num_classes]),
        })
    }

    /// Parameters of every tensor in checkpoint order: front ends in channel
    /// order, then conv stages (kernels, biases), then head weights and bias.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self.front_ends.iter().flat_map(|f| f.tensors()).collect();
        for s in &self.stages {
            out.push(&s.kernels);
            out.push(&s.biases);
        }
        out.push(&self.head_weights);
        out.push(&self.head_bias);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self
            .front_ends
            .iter_mut()
            .flat_map(|f| f.tensors_mut())
            .collect();
        for s in &mut self.stages {
            out.push(&mut s.kernels);
            out.push(&mut s.biases);
        }
        out.push(&mut self.head_weights);
        out.push(&mut self.head_bias);
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    /// `self += alpha * other` over every parameter tensor.
    pub fn add_scaled(&mut self, alpha: f64, other: &Self) -> Result<()> {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_scaled(alpha, b)?;
        }
        Ok(())
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors()
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    /// Overwrites every parameter from a flat vector in [`tensors`](Self::tensors) order.
    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.num_params();
        if flat.len() != n {
            return Err(Error::shape("load_flat", &[n], &[flat.len()]));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            let len = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }

    pub fn front_end_for(&self, channel: usize) -> &FrontEnd {
        if self.config.shared_scaling {
            &self.front_ends[0]
        } else {
            &self.front_ends[channel]
        }
    }

    fn check_input(&self, signals: &Tensor) -> Result<(usize, usize)> {
        signals.expect_rank("model_forward", 2)?;
        let (c, t) = (signals.shape()[0], signals.shape()[1]);
        if c != self.config.num_channels {
            return Err(Error::shape(
                "model_forward",
                &[self.config.num_channels, t],
                signals.shape(),
            ));
        }
        Ok((c, t))
    }

    pub(crate) fn forward_cached(&self, signals: &Tensor) -> Result<ForwardCache> {
        let (channels, t) = self.check_input(signals)?;
        let levels = self.config.levels();
        let map = levels * t;
        let kernels: Vec<Vec<Vec<f64>>> = self.front_ends.iter().map(|f| f.kernels()).collect();
        let mut front_pre = vec![0.0; channels * map];
        let mut stacked = vec![0.0; channels * map];
        for c in 0..channels {
            let fe_idx = if self.config.shared_scaling { 0 } else { c };
            let fe = &self.front_ends[fe_idx];
            bank_forward(
                &signals.data()[c * t..(c + 1) * t],
                &kernels[fe_idx],
                fe.biases().data(),
                fe.activation(),
                &mut front_pre[c * map..(c + 1) * map],
                &mut stacked[c * map..(c + 1) * map],
            );
        }

        let (kh, kw) = self.config.conv_kernel;
        let mut stage_pre = Vec::with_capacity(self.stages.len());
        let mut stage_out: Vec<Vec<f64>> = Vec::with_capacity(self.stages.len());
        let mut cin = channels;
        for stage in &self.stages {
            let cout = stage.biases.len();
            let geom = Conv2dGeometry {
                cin,
                cout,
                h: levels,
                w: t,
                kh,
                kw,
            };
            let input = stage_out.last().unwrap_or(&stacked);
            let mut pre = vec![0.0; cout * map];
            conv2d_same_into(geom, input, stage.kernels.data(), stage.biases.data(), &mut pre);
            let mut out = pre.clone();
            relu_inplace(&mut out);
            stage_pre.push(pre);
            stage_out.push(out);
            cin = cout;
        }

        let last = stage_out.last().unwrap_or(&stacked);
        let pooled: Vec<f64> = last
            .chunks_exact(map)
            .map(|ch| ch.iter().sum::<f64>() / map as f64)
            .collect();
        let pooled = Tensor::vector(pooled)?;
        let logits = crate::numerics::linear(&pooled, &self.head_weights, &self.head_bias)?;
        Ok(ForwardCache {
            kernels,
            front_pre,
            stacked,
            stage_pre,
            stage_out,
            pooled,
            logits,
            time: t,
        })
    }

    /// Logits for one `(num_channels, T)` trial.
    pub fn forward(&self, signals: &Tensor) -> Result<Tensor> {
        Ok(self.forward_cached(signals)?.logits)
    }

    /// `(num_channels, levels, T)` tensor fed to the first conv stage.
    pub fn stacked_features(&self, signals: &Tensor) -> Result<Tensor> {
        let cache = self.forward_cached(signals)?;
        Tensor::new(
            vec![self.config.num_channels, self.config.levels(), cache.time],
            cache.stacked,
        )
    }

    /// Cross-entropy loss of one trial and the gradient of every parameter.
    pub fn loss_and_grad(&self, signals: &Tensor, target: usize) -> Result<(f64, Self)> {
        let cache = self.forward_cached(signals)?;
        let loss = crate::numerics::softmax_cross_entropy(&cache.logits, target)?;
        let grads = self.backward(signals, &cache, target)?;
        Ok((loss, grads))
    }

    pub(crate) fn backward(
        &self,
        signals: &Tensor,
        cache: &ForwardCache,
        target: usize,
    ) -> Result<Self> {
        let mut grads = self.zeros_like();
        let t = cache.time;
        let channels = self.config.num_channels;
        let levels = self.config.levels();
        let map = levels * t;

        let mut g_logits = softmax(&cache.logits);
        g_logits.data_mut()[target] -= 1.0;
        let (g_pooled, g_hw, g_hb) =
            crate::numerics::linear_backward(&cache.pooled, &self.head_weights, &g_logits)?;
        grads.head_weights = g_hw;
        grads.head_bias = g_hb;

        let inv = 1.0 / map as f64;
        let mut g_out: Vec<f64> = g_pooled
            .data()
            .iter()
            .flat_map(|&g| std::iter::repeat_n(g * inv, map))
            .collect();

        let (kh, kw) = self.config.conv_kernel;
        for (s, stage) in self.stages.iter().enumerate().rev() {
            let cout = stage.biases.len();
            let cin = if s == 0 {
                channels
            } else {
                self.stages[s - 1].biases.len()
            };
            let geom = Conv2dGeometry {
                cin,
                cout,
                h: levels,
                w: t,
                kh,
                kw,
            };
            relu_mask_inplace(&cache.stage_pre[s], &mut g_out);
            let input = if s == 0 {
                &cache.stacked
            } else {
                &cache.stage_out[s - 1]
            };
            let mut g_in = vec![0.0; cin * map];
            let gs = &mut grads.stages[s];
            conv2d_same_backward_acc(
                geom,
                input,
                stage.kernels.data(),
                &g_out,
                Some(&mut g_in),
                gs.kernels.data_mut(),
                gs.biases.data_mut(),
            );
            g_out = g_in;
        }

        for c in 0..channels {
            let fe_idx = if self.config.shared_scaling { 0 } else { c };
            let kernels = &cache.kernels[fe_idx];
            let fe = &self.front_ends[fe_idx];
            let mut gk: Vec<Vec<f64>> = kernels.iter().map(|k| vec![0.0; k.len()]).collect();
            let mut gb = vec![0.0; levels];
            bank_backward(
                &signals.data()[c * t..(c + 1) * t],
                kernels,
                fe.activation(),
                &cache.front_pre[c * map..(c + 1) * map],
                &mut g_out[c * map..(c + 1) * map],
                &mut gk,
                &mut gb,
                None,
            );
            match &mut grads.front_ends[fe_idx] {
                FrontEnd::Scaling(g) => {
                    let gw = fold_pyramid_gradient(&gk);
                    for (a, b) in g.weight.data_mut().iter_mut().zip(&gw) {
                        *a += b;
                    }
                    for (a, b) in g.biases.data_mut().iter_mut().zip(&gb) {
                        *a += b;
                    }
                }
                FrontEnd::Bank(g) => {
                    for (kt, k) in g.kernels.iter_mut().zip(&gk) {
                        for (a, b) in kt.data_mut().iter_mut().zip(k) {
                            *a += b;
                        }
                    }
                    for (a, b) in g.biases.data_mut().iter_mut().zip(&gb) {
                        *a += b;
                    }
                }
            }
        }
        Ok(grads)
    }

    /// Predicted class: argmax of the logits, lowest index on ties.
    pub fn predict(&self, signals: &Tensor) -> Result<usize> {
        Ok(argmax(self.forward(signals)?.data()))
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Ablation variant: same backend, each scaling layer replaced by a bank of
/// independent kernels with the pyramid's lengths.
pub fn build_baseline(config: &ScalingNetConfig, seed: u64) -> Result<ScalingNetParams> {
    ScalingNetParams::init_variant(config, Variant::Baseline, seed)
}
