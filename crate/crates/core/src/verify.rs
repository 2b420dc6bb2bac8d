//! Finite-difference gradient checks for every primitive and for the
//! end-to-end loss.
//!
//! Each check perturbs every input coordinate by `±h` and compares the
//! central difference against the analytic gradient. Tensor-valued
//! primitives are reduced to a scalar with a fixed random projection.
//! Coordinates whose perturbation flips the sign of any relu pre-activation
//! straddle a kink; those are counted separately and not compared.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::model::{ScalingNetConfig, ScalingNetParams, Variant};
use crate::numerics::{self as nx, Tensor};
use crate::scaling::{Activation, ScalingLayerParams};

/// Gradients smaller than this are compared on an absolute scale.
pub const RELATIVE_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckSettings {
    pub step: f64,
    pub primitive_tolerance: f64,
    pub model_tolerance: f64,
}

impl Default for GradCheckSettings {
    fn default() -> Self {
        Self {
            step: 1e-6,
            primitive_tolerance: 1e-5,
            model_tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub max_relative_error: f64,
    pub tolerance: f64,
    pub checked: usize,
    pub kinks_skipped: usize,
    /// Analytic and numeric values at the worst coordinate.
    pub worst: (f64, f64),
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_relative_error <= self.tolerance && self.checked > 0
    }

    fn merge(&mut self, other: &CheckResult) {
        if other.max_relative_error > self.max_relative_error {
            self.max_relative_error = other.max_relative_error;
            self.worst = other.worst;
        }
        self.checked += other.checked;
        self.kinks_skipped += other.kinks_skipped;
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Central-difference check of `f` at `x` against `analytic`. `f` returns the
/// scalar value and a relu sign pattern (empty when the map is smooth).
pub fn finite_difference_check(
    name: &str,
    x: &[f64],
    analytic: &[f64],
    step: f64,
    tolerance: f64,
    mut f: impl FnMut(&[f64]) -> Result<(f64, Vec<bool>)>,
) -> Result<CheckResult> {
    assert_eq!(x.len(), analytic.len(), "{name}: gradient length mismatch");
    let mut probe = x.to_vec();
    let mut result = CheckResult {
        name: name.to_string(),
        max_relative_error: 0.0,
        tolerance,
        checked: 0,
        kinks_skipped: 0,
        worst: (0.0, 0.0),
    };
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let (fp, pp) = f(&probe)?;
        probe[i] = x[i] - step;
        let (fm, pm) = f(&probe)?;
        probe[i] = x[i];
        if pp != pm {
            result.kinks_skipped += 1;
            continue;
        }
        let numeric = (fp - fm) / (2.0 * step);
        let err = relative_error(analytic[i], numeric);
        if err > result.max_relative_error {
            result.max_relative_error = err;
            result.worst = (analytic[i], numeric);
        }
        result.checked += 1;
    }
    Ok(result)
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn vector(data: Vec<f64>) -> Tensor {
    Tensor::vector(data).expect("non-empty")
}

fn shaped(shape: &[usize], data: Vec<f64>) -> Tensor {
    Tensor::new(shape.to_vec(), data).expect("consistent shape")
}

fn projection(out: &Tensor, weights: &[f64]) -> f64 {
    out.data().iter().zip(weights).map(|(a, b)| a * b).sum()
}

/// Per-primitive checks for one seed.
pub fn check_primitives(seed: u64, s: &GradCheckSettings) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, tol) = (s.step, s.primitive_tolerance);
    let mut results = Vec::new();

    // correlate1d_same, T=16, k=5
    {
        let signal = random_vec(&mut rng, 16);
        let kernel = random_vec(&mut rng, 5);
        let proj = random_vec(&mut rng, 16);
        let (gs, gk) = nx::correlate1d_same_backward(
            &vector(signal.clone()),
            &vector(kernel.clone()),
            &vector(proj.clone()),
        )?;
        let k = vector(kernel.clone());
        results.push(finite_difference_check(
            "correlate1d_same/signal",
            &signal,
            gs.data(),
            h,
            tol,
            |x| Ok((projection(&nx::correlate1d_same(&vector(x.to_vec()), &k)?, &proj), vec![])),
        )?);
        let sig = vector(signal);
        results.push(finite_difference_check(
            "correlate1d_same/kernel",
            &kernel,
            gk.data(),
            h,
            tol,
            |x| Ok((projection(&nx::correlate1d_same(&sig, &vector(x.to_vec()))?, &proj), vec![])),
        )?);
    }

    // avgpool_halve over a random odd length
    {
        let n = 2 * rng.random_range(1..20) + 1;
        let kernel = random_vec(&mut rng, n);
        let out_len = nx::pooled_len(n).expect("odd n >= 3");
        let proj = random_vec(&mut rng, out_len);
        let g = nx::avgpool_halve_backward(n, &vector(proj.clone()))?;
        results.push(finite_difference_check(
            "avgpool_halve",
            &kernel,
            g.data(),
            h,
            tol,
            |x| Ok((projection(&nx::avgpool_halve(&vector(x.to_vec()))?, &proj), vec![])),
        )?);
    }

    // conv2d_same, C_in=2, H=4, W=8, C_out=3, 3x5
    {
        let (ci, hh, ww, co) = (2, 4, 8, 3);
        let input = random_vec(&mut rng, ci * hh * ww);
        let kernels = random_vec(&mut rng, co * ci * 15);
        let biases = random_vec(&mut rng, co);
        let proj = random_vec(&mut rng, co * hh * ww);
        let ishape = [ci, hh, ww];
        let kshape = [co, ci, 3, 5];
        let (gi, gk, gb) = nx::conv2d_same_backward(
            &shaped(&ishape, input.clone()),
            &shaped(&kshape, kernels.clone()),
            &shaped(&[co, hh, ww], proj.clone()),
        )?;
        let eval = |i: &[f64], k: &[f64], b: &[f64]| -> Result<(f64, Vec<bool>)> {
            let out = nx::conv2d_same(
                &shaped(&ishape, i.to_vec()),
                &shaped(&kshape, k.to_vec()),
                &vector(b.to_vec()),
            )?;
            Ok((projection(&out, &proj), vec![]))
        };
        results.push(finite_difference_check("conv2d_same/input", &input, gi.data(), h, tol, |x| {
            eval(x, &kernels, &biases)
        })?);
        results.push(finite_difference_check(
            "conv2d_same/kernels",
            &kernels,
            gk.data(),
            h,
            tol,
            |x| eval(&input, x, &biases),
        )?);
        results.push(finite_difference_check("conv2d_same/biases", &biases, gb.data(), h, tol, |x| {
            eval(&input, &kernels, x)
        })?);
    }

    // relu away from zero
    {
        let x: Vec<f64> = (0..24)
            .map(|_| {
                let m = rng.random_range(0.05..1.0);
                if rng.random_bool(0.5) {
                    m
                } else {
                    -m
                }
            })
            .collect();
        let proj = random_vec(&mut rng, 24);
        let g = nx::relu_backward(&vector(x.clone()), &vector(proj.clone()))?;
        results.push(finite_difference_check("relu", &x, g.data(), h, tol, |v| {
            Ok((projection(&nx::relu(&vector(v.to_vec())), &proj), vec![]))
        })?);
    }

    // global average pooling
    {
        let shape = [3, 4, 5];
        let x = random_vec(&mut rng, 60);
        let proj = random_vec(&mut rng, 3);
        let g = nx::global_avg_pool_backward(&shape, &vector(proj.clone()))?;
        results.push(finite_difference_check("global_avg_pool", &x, g.data(), h, tol, |v| {
            Ok((projection(&nx::global_avg_pool(&shaped(&shape, v.to_vec()))?, &proj), vec![]))
        })?);
    }

    // linear, K=2, D=6
    {
        let input = random_vec(&mut rng, 6);
        let weights = random_vec(&mut rng, 12);
        let bias = random_vec(&mut rng, 2);
        let proj = random_vec(&mut rng, 2);
        let (gi, gw, gb) = nx::linear_backward(
            &vector(input.clone()),
            &shaped(&[2, 6], weights.clone()),
            &vector(proj.clone()),
        )?;
        let eval = |i: &[f64], w: &[f64], b: &[f64]| -> Result<(f64, Vec<bool>)> {
            let out = nx::linear(&vector(i.to_vec()), &shaped(&[2, 6], w.to_vec()), &vector(b.to_vec()))?;
            Ok((projection(&out, &proj), vec![]))
        };
        results.push(finite_difference_check("linear/input", &input, gi.data(), h, tol, |x| {
            eval(x, &weights, &bias)
        })?);
        results.push(finite_difference_check("linear/weights", &weights, gw.data(), h, tol, |x| {
            eval(&input, x, &bias)
        })?);
        results.push(finite_difference_check("linear/bias", &bias, gb.data(), h, tol, |x| {
            eval(&input, &weights, x)
        })?);
    }

    // softmax cross entropy, K=4
    {
        let logits: Vec<f64> = random_vec(&mut rng, 4).iter().map(|x| 3.0 * x).collect();
        let target = rng.random_range(0..4);
        let g = nx::softmax_cross_entropy_backward(&vector(logits.clone()), target)?;
        results.push(finite_difference_check("softmax_cross_entropy", &logits, g.data(), h, tol, |x| {
            Ok((nx::softmax_cross_entropy(&vector(x.to_vec()), target)?, vec![]))
        })?);
    }

    results.extend(check_scaling_layer(&mut rng, s)?);
    Ok(results)
}

/// Scaling layer at T=32, k0=9 with both activations.
fn check_scaling_layer(rng: &mut ChaCha8Rng, s: &GradCheckSettings) -> Result<Vec<CheckResult>> {
    let (t, k0) = (32, 9);
    let levels = crate::scaling::max_scaling_level(k0)? + 1;
    let mut results = Vec::new();
    for activation in [Activation::Identity, Activation::Relu] {
        let suffix = match activation {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
        };
        let weight = random_vec(rng, k0);
        let biases: Vec<f64> = random_vec(rng, levels).iter().map(|b| 0.2 * b).collect();
        let signal = random_vec(rng, t);
        let proj = random_vec(rng, levels * t);
        let layer = |w: &[f64], b: &[f64]| {
            ScalingLayerParams::new(vector(w.to_vec()), vector(b.to_vec()), activation)
        };
        let grads = layer(&weight, &biases)?.backward(&vector(signal.clone()), &shaped(&[levels, t], proj.clone()))?;

        let eval = |w: &[f64], b: &[f64], x: &[f64]| -> Result<(f64, Vec<bool>)> {
            let sig = vector(x.to_vec());
            let value = projection(layer(w, b)?.forward(&sig)?.values(), &proj);
            let pattern = match activation {
                Activation::Identity => vec![],
                Activation::Relu => {
                    let linear = ScalingLayerParams::new(vector(w.to_vec()), vector(b.to_vec()), Activation::Identity)?;
                    linear.forward(&sig)?.values().data().iter().map(|&v| v > 0.0).collect()
                }
            };
            Ok((value, pattern))
        };
        let (h, tol) = (s.step, s.primitive_tolerance);
        results.push(finite_difference_check(
            &format!("scaling_layer[{suffix}]/weight"),
            &weight,
            grads.weight.data(),
            h,
            tol,
            |w| eval(w, &biases, &signal),
        )?);
        results.push(finite_difference_check(
            &format!("scaling_layer[{suffix}]/biases"),
            &biases,
            grads.biases.data(),
            h,
            tol,
            |b| eval(&weight, b, &signal),
        )?);
        results.push(finite_difference_check(
            &format!("scaling_layer[{suffix}]/signal"),
            &signal,
            grads.signal.data(),
            h,
            tol,
            |x| eval(&weight, &biases, x),
        )?);
    }
    Ok(results)
}

/// Desk-scale model used by the end-to-end check: 2 channels, T=32, k0=9,
/// filters [3, 2].
pub fn desk_config() -> ScalingNetConfig {
    ScalingNetConfig {
        num_channels: 2,
        weight_length: 9,
        conv_filters: vec![3, 2],
        ..Default::default()
    }
}

/// End-to-end loss gradient of every parameter for one seed.
pub fn check_model(seed: u64, variant: Variant, s: &GradCheckSettings) -> Result<CheckResult> {
    let config = desk_config();
    let mut params = ScalingNetParams::init_variant(&config, variant, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    // non-zero biases so every bias path is exercised
    for fe in params.front_ends.iter_mut() {
        let biases = match fe {
            crate::model::FrontEnd::Scaling(p) => &mut p.biases,
            crate::model::FrontEnd::Bank(b) => &mut b.biases,
        };
        for b in biases.data_mut() {
            *b = rng.random_range(-0.1..0.1);
        }
    }
    for st in params.stages.iter_mut() {
        for b in st.biases.data_mut() {
            *b = rng.random_range(-0.1..0.1);
        }
    }
    for b in params.head_bias.data_mut() {
        *b = rng.random_range(-0.1..0.1);
    }
    let signals = shaped(&[2, 32], random_vec(&mut rng, 64));
    let target = rng.random_range(0..2);

    let (_, grads) = params.loss_and_grad(&signals, target)?;
    let theta = params.flatten();
    let mut probe = params.clone();
    let name = match variant {
        Variant::Scaling => "model[scaling]",
        Variant::Baseline => "model[baseline]",
    };
    finite_difference_check(name, &theta, &grads.flatten(), s.step, s.model_tolerance, |x| {
        probe.load_flat(x)?;
        let cache = probe.forward_cached(&signals)?;
        let loss = nx::softmax_cross_entropy(&cache.logits, target)?;
        Ok((loss, cache.activation_pattern()))
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub seeds: Vec<u64>,
    pub results: Vec<CheckResult>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(CheckResult::passed)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "gradient check over {} seeds (h = 1e-6, relative floor {RELATIVE_FLOOR:e})\n",
            self.seeds.len()
        );
        for r in &self.results {
            s.push_str(&format!(
                "{:<34} max rel err {:>10.3e} (at {:>10.3e} vs {:>10.3e})  tol {:.0e}  checked {:>6}  kinks {:>3}  {}\n",
                r.name,
                r.max_relative_error,
                r.worst.0,
                r.worst.1,
                r.tolerance,
                r.checked,
                r.kinks_skipped,
                if r.passed() { "ok" } else { "FAIL" }
            ));
        }
        s
    }
}

/// Runs every check for each seed and aggregates the worst error per check.
pub fn run_suite(seeds: &[u64], s: &GradCheckSettings) -> Result<GradCheckReport> {
    let mut results: Vec<CheckResult> = Vec::new();
    for &seed in seeds {
        let mut batch = check_primitives(seed, s)?;
        batch.push(check_model(seed, Variant::Scaling, s)?);
        batch.push(check_model(seed, Variant::Baseline, s)?);
        for r in batch {
            match results.iter_mut().find(|e| e.name == r.name) {
                Some(e) => e.merge(&r),
                None => results.push(r),
            }
        }
    }
    Ok(GradCheckReport {
        seeds: seeds.to_vec(),
        results,
    })
}
