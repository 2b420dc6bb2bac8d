use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Passes `upstream` where `x > 0`; the subgradient at exactly zero is 0.
pub fn relu_backward(x: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    upstream.expect_shape("relu_backward", x.shape())?;
    let data = x
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&v, &u)| if v > 0.0 { u } else { 0.0 })
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

pub(crate) fn relu_inplace(x: &mut [f64]) {
    for v in x {
        if *v <= 0.0 {
            *v = 0.0;
        }
    }
}

/// Zeroes `grad` wherever the pre-activation was not strictly positive.
pub(crate) fn relu_mask_inplace(pre: &[f64], grad: &mut [f64]) {
    for (g, &p) in grad.iter_mut().zip(pre) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Mean over `(H, W)` for every channel of a `(C, H, W)` tensor.
pub fn global_avg_pool(input: &Tensor) -> Result<Tensor> {
    input.expect_rank("global_avg_pool", 3)?;
    let c = input.shape()[0];
    let plane = input.len() / c;
    let out = input
        .data()
        .chunks_exact(plane)
        .map(|ch| ch.iter().sum::<f64>() / plane as f64)
        .collect();
    Tensor::vector(out)
}

/// Spreads each channel's upstream value uniformly over its `H × W` plane.
pub fn global_avg_pool_backward(input_shape: &[usize], upstream: &Tensor) -> Result<Tensor> {
    if input_shape.len() != 3 {
        return Err(Error::shape("global_avg_pool_backward", &[0, 0, 0], input_shape));
    }
    upstream.expect_shape("global_avg_pool_backward", &input_shape[..1])?;
    let plane = input_shape[1] * input_shape[2];
    let inv = 1.0 / plane as f64;
    let data = upstream
        .data()
        .iter()
        .flat_map(|&u| std::iter::repeat_n(u * inv, plane))
        .collect();
    Tensor::new(input_shape.to_vec(), data)
}

/// `weights · input + bias` for `weights` of shape `(K, D)`.
pub fn linear(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (k, d) = linear_dims(input, weights, bias)?;
    let out = (0..k)
        .map(|i| {
            let row = &weights.data()[i * d..(i + 1) * d];
            bias.data()[i] + row.iter().zip(input.data()).map(|(w, x)| w * x).sum::<f64>()
        })
        .collect();
    Tensor::vector(out)
}

/// Returns `(grad_input, grad_weights, grad_bias)`.
pub fn linear_backward(
    input: &Tensor,
    weights: &Tensor,
    upstream: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (k, d) = linear_dims(input, weights, upstream)?;
    let mut gi = vec![0.0; d];
    let mut gw = vec![0.0; k * d];
    for (i, &u) in upstream.data().iter().enumerate() {
        let row = &weights.data()[i * d..(i + 1) * d];
        for j in 0..d {
            gi[j] += u * row[j];
            gw[i * d + j] = u * input.data()[j];
        }
    }
    Ok((
        Tensor::vector(gi)?,
        Tensor::new(vec![k, d], gw)?,
        upstream.clone(),
    ))
}

fn linear_dims(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<(usize, usize)> {
    input.expect_rank("linear", 1)?;
    weights.expect_rank("linear", 2)?;
    let (k, d) = (weights.shape()[0], weights.shape()[1]);
    if d != input.len() {
        return Err(Error::shape("linear", &[k, input.len()], weights.shape()));
    }
    bias.expect_shape("linear", &[k])?;
    Ok((k, d))
}

pub fn softmax(logits: &Tensor) -> Tensor {
    let max = logits.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp = logits.map(|z| (z - max).exp());
    let total = exp.sum();
    exp.map(|e| e / total)
}

/// `−log softmax(logits)[target]`, stabilised by max subtraction.
pub fn softmax_cross_entropy(logits: &Tensor, target: usize) -> Result<f64> {
    check_target(logits, target)?;
    let max = logits.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.data().iter().map(|z| (z - max).exp()).sum::<f64>().ln() + max;
    Ok(lse - logits.data()[target])
}

/// `softmax(logits) − onehot(target)`.
pub fn softmax_cross_entropy_backward(logits: &Tensor, target: usize) -> Result<Tensor> {
    check_target(logits, target)?;
    let mut g = softmax(logits);
    g.data_mut()[target] -= 1.0;
    Ok(g)
}

fn check_target(logits: &Tensor, target: usize) -> Result<()> {
    logits.expect_rank("softmax_cross_entropy", 1)?;
    if target >= logits.len() {
        return Err(Error::ClassOutOfRange {
            index: target,
            classes: logits.len(),
        });
    }
    Ok(())
}
