//! Naive reference implementations used as test oracles.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Explicitly zero-padded cross-correlation.
pub fn naive_correlate(signal: &[f64], kernel: &[f64]) -> Vec<f64> {
    let r = kernel.len() / 2;
    let mut padded = vec![0.0; r];
    padded.extend_from_slice(signal);
    padded.extend(std::iter::repeat(0.0).take(r));
    (0..signal.len())
        .map(|t| {
            let mut acc = 0.0;
            for j in 0..kernel.len() {
                acc += kernel[j] * padded[t + j];
            }
            acc
        })
        .collect()
}

/// Pairwise-averaging pyramid built from scratch, base kernel first.
pub fn naive_pyramid(weight: &[f64]) -> Vec<Vec<f64>> {
    let mut levels = vec![weight.to_vec()];
    loop {
        let k = levels.last().unwrap().clone();
        if k.len() == 1 {
            return levels;
        }
        let half = (k.len() - 1) / 2;
        let mut src = k.clone();
        if half % 2 == 1 {
            src.pop();
        } else {
            src.push(0.0);
        }
        assert_eq!(src.len() % 2, 0);
        let next: Vec<f64> = src.chunks(2).map(|p| (p[0] + p[1]) / 2.0).collect();
        levels.push(next);
    }
}

pub fn naive_scaling_forward(weight: &[f64], biases: &[f64], relu: bool, signal: &[f64]) -> Vec<Vec<f64>> {
    naive_pyramid(weight)
        .iter()
        .take(biases.len())
        .zip(biases)
        .map(|(k, &b)| {
            naive_correlate(signal, k)
                .into_iter()
                .map(|v| {
                    let x = v + b;
                    if relu && x < 0.0 {
                        0.0
                    } else {
                        x
                    }
                })
                .collect()
        })
        .collect()
}

/// `input[ci][y][x]`, `kernels[co][ci][dy][dx]`; same padding on both axes.
pub fn naive_conv2d(
    input: &[Vec<Vec<f64>>],
    kernels: &[Vec<Vec<Vec<f64>>>],
    biases: &[f64],
) -> Vec<Vec<Vec<f64>>> {
    let (h, w) = (input[0].len(), input[0][0].len());
    let (kh, kw) = (kernels[0][0].len(), kernels[0][0][0].len());
    let (ry, rx) = (kh / 2, kw / 2);
    let at = |ci: usize, y: isize, x: isize| -> f64 {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            0.0
        } else {
            input[ci][y as usize][x as usize]
        }
    };
    kernels
        .iter()
        .zip(biases)
        .map(|(kc, &b)| {
            (0..h)
                .map(|y| {
                    (0..w)
                        .map(|x| {
                            let mut acc = b;
                            for (ci, k) in kc.iter().enumerate() {
                                for dy in 0..kh {
                                    for dx in 0..kw {
                                        let iy = y as isize + dy as isize - ry as isize;
                                        let ix = x as isize + dx as isize - rx as isize;
                                        acc += k[dy][dx] * at(ci, iy, ix);
                                    }
                                }
                            }
                            acc
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
