//! Correlation, kernel downsampling and 2D convolution, with their exact
//! vector-Jacobian products.
//!
//! The slice-level kernels (`*_acc`, `*_into`) are what the model uses on its
//! hot path. The `Tensor` wrappers validate shapes and allocate.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// `y += alpha * x`
#[inline(always)]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (o, &v) in y.iter_mut().zip(x) {
        *o += alpha * v;
    }
}

/// Dot product with a fixed sixteen-way accumulation order.
#[inline(always)]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let ca = a.chunks_exact(16);
    let cb = b.chunks_exact(16);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    let mut acc = [0.0f64; 16];
    for (x, y) in ca.zip(cb) {
        for l in 0..16 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut lanes = [0.0f64; 4];
    for l in 0..4 {
        lanes[l] = (acc[l] + acc[l + 4]) + (acc[l + 8] + acc[l + 12]);
    }
    let mut s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// Output positions `lo..hi` for which tap `j` of a centred kernel with
/// half-width `r` reads an in-bounds sample of a length-`n` signal.
#[inline(always)]
fn tap_range(n: usize, r: usize, j: usize) -> (usize, usize) {
    let lo = r.saturating_sub(j);
    let hi = (n + r).saturating_sub(j).min(n);
    (lo, hi.max(lo))
}

fn check_odd(op: &'static str, len: usize) -> Result<()> {
    if len % 2 == 0 {
        return Err(Error::EvenKernel { op, len });
    }
    Ok(())
}

/// `out[t] += Σ_j kernel[j] · signal[t + j − r]`, zero outside the signal.
#[inline(always)]
pub(crate) fn correlate_same_acc(signal: &[f64], kernel: &[f64], out: &mut [f64]) {
    let n = signal.len();
    let r = kernel.len() / 2;
    for (j, &w) in kernel.iter().enumerate() {
        let (lo, hi) = tap_range(n, r, j);
        if lo == hi {
            continue;
        }
        let s0 = lo + j - r;
        axpy(w, &signal[s0..s0 + (hi - lo)], &mut out[lo..hi]);
    }
}

/// Accumulates the signal and kernel gradients of [`correlate_same_acc`].
pub(crate) fn correlate_same_backward_acc(
    signal: &[f64],
    kernel: &[f64],
    upstream: &[f64],
    grad_signal: Option<&mut [f64]>,
    grad_kernel: &mut [f64],
) {
    let n = signal.len();
    let r = kernel.len() / 2;
    for (j, gk) in grad_kernel.iter_mut().enumerate() {
        let (lo, hi) = tap_range(n, r, j);
        if lo == hi {
            continue;
        }
        let s0 = lo + j - r;
        *gk += dot(&upstream[lo..hi], &signal[s0..s0 + (hi - lo)]);
    }
    if let Some(gs) = grad_signal {
        for (j, &w) in kernel.iter().enumerate() {
            let (lo, hi) = tap_range(n, r, j);
            if lo == hi {
                continue;
            }
            let s0 = lo + j - r;
            axpy(w, &upstream[lo..hi], &mut gs[s0..s0 + (hi - lo)]);
        }
    }
}

/// Same-padded linear cross-correlation of a rank-1 signal with an odd kernel.
///
/// `output[t] = Σ_j kernel[j] · padded[t + j]` where `padded` is the signal
/// zero-padded by `(k − 1)/2` on both sides, so the output keeps length `T`.
pub fn correlate1d_same(signal: &Tensor, kernel: &Tensor) -> Result<Tensor> {
    validate_correlate(signal, kernel)?;
    let mut out = vec![0.0; signal.len()];
    correlate_same_acc(signal.data(), kernel.data(), &mut out);
    Tensor::vector(out)
}

/// Returns `(grad_signal, grad_kernel)` for upstream gradient `upstream`.
pub fn correlate1d_same_backward(
    signal: &Tensor,
    kernel: &Tensor,
    upstream: &Tensor,
) -> Result<(Tensor, Tensor)> {
    validate_correlate(signal, kernel)?;
    upstream.expect_shape("correlate1d_same_backward", signal.shape())?;
    let mut gs = vec![0.0; signal.len()];
    let mut gk = vec![0.0; kernel.len()];
    correlate_same_backward_acc(
        signal.data(),
        kernel.data(),
        upstream.data(),
        Some(&mut gs),
        &mut gk,
    );
    Ok((Tensor::vector(gs)?, Tensor::vector(gk)?))
}

fn validate_correlate(signal: &Tensor, kernel: &Tensor) -> Result<()> {
    signal.expect_rank("correlate1d_same", 1)?;
    kernel.expect_rank("correlate1d_same", 1)?;
    check_odd("correlate1d_same", kernel.len())?;
    Ok(())
}

/// Length after one downsampling step, or `None` when `n` is even or 1.
pub fn pooled_len(n: usize) -> Option<usize> {
    if n < 3 || n % 2 == 0 {
        return None;
    }
    let half = (n - 1) / 2;
    Some(if half % 2 == 1 { half } else { half + 1 })
}

pub(crate) fn avgpool_halve_slice(kernel: &[f64]) -> Vec<f64> {
    let out_len = pooled_len(kernel.len()).expect("validated kernel length");
    (0..out_len)
        .map(|i| {
            let a = kernel[2 * i];
            let b = kernel.get(2 * i + 1).copied().unwrap_or(0.0);
            (a + b) / 2.0
        })
        .collect()
}

/// Transpose of [`avgpool_halve_slice`]; accumulates into `grad_input`.
pub(crate) fn avgpool_halve_backward_acc(upstream: &[f64], grad_input: &mut [f64]) {
    let n = grad_input.len();
    for (i, &g) in upstream.iter().enumerate() {
        grad_input[2 * i] += g / 2.0;
        if 2 * i + 1 < n {
            grad_input[2 * i + 1] += g / 2.0;
        }
    }
}

/// One window-2 average-pooling step over an odd-length kernel.
///
/// When `(n − 1)/2` is odd the trailing element is dropped; otherwise the
/// kernel is zero-padded by one element on the right. Either way the result
/// has odd length.
pub fn avgpool_halve(kernel: &Tensor) -> Result<Tensor> {
    kernel.expect_rank("avgpool_halve", 1)?;
    check_odd("avgpool_halve", kernel.len())?;
    if kernel.len() == 1 {
        return Err(Error::KernelExhausted);
    }
    Tensor::vector(avgpool_halve_slice(kernel.data()))
}

/// Gradient of [`avgpool_halve`] w.r.t. an input of length `input_len`.
pub fn avgpool_halve_backward(input_len: usize, upstream: &Tensor) -> Result<Tensor> {
    let expected = pooled_len(input_len).ok_or(if input_len == 1 {
        Error::KernelExhausted
    } else {
        Error::EvenKernel {
            op: "avgpool_halve_backward",
            len: input_len,
        }
    })?;
    upstream.expect_shape("avgpool_halve_backward", &[expected])?;
    let mut g = vec![0.0; input_len];
    avgpool_halve_backward_acc(upstream.data(), &mut g);
    Tensor::vector(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Conv2dGeometry {
    pub cin: usize,
    pub cout: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
}

impl Conv2dGeometry {
    fn plane(&self) -> usize {
        self.h * self.w
    }

    fn kidx(&self, co: usize, ci: usize, dy: usize, dx: usize) -> usize {
        ((co * self.cin + ci) * self.kh + dy) * self.kw + dx
    }
}

/// `dst[x] += Σ_j taps[j] · src[x + j − r]` in one pass over `dst`.
#[inline(always)]
fn row_correlate_fixed<const K: usize>(src: &[f64], taps: &[f64], dst: &mut [f64]) {
    let n = src.len();
    let r = K / 2;
    if n <= 2 * r {
        correlate_same_acc(src, taps, dst);
        return;
    }
    let taps: &[f64; K] = taps.try_into().expect("tap count");
    for x in (0..r).chain(n - r..n) {
        let mut acc = 0.0;
        for (j, &t) in taps.iter().enumerate() {
            if let Some(&s) = (x + j).checked_sub(r).and_then(|i| src.get(i)) {
                acc += t * s;
            }
        }
        dst[x] += acc;
    }
    for (d, win) in dst[r..n - r].iter_mut().zip(src.windows(K)) {
        let win: &[f64; K] = win.try_into().unwrap();
        let mut acc = 0.0;
        for j in 0..K {
            acc += taps[j] * win[j];
        }
        *d += acc;
    }
}

#[inline(always)]
fn row_correlate(src: &[f64], taps: &[f64], dst: &mut [f64]) {
    match taps.len() {
        3 => row_correlate_fixed::<3>(src, taps, dst),
        5 => row_correlate_fixed::<5>(src, taps, dst),
        7 => row_correlate_fixed::<7>(src, taps, dst),
        _ => correlate_same_acc(src, taps, dst),
    }
}

/// `out[j] += Σ_x up[x] · src[x + j − r]` over in-bounds positions.
#[inline(always)]
fn row_tap_gradient_fixed<const K: usize>(up: &[f64], src: &[f64], out: &mut [f64]) {
    let n = src.len();
    let r = K / 2;
    if n <= 2 * r + 4 {
        for (j, o) in out.iter_mut().enumerate() {
            let (lo, hi) = tap_range(n, r, j);
            if lo < hi {
                *o += dot(&up[lo..hi], &src[lo + j - r..hi + j - r]);
            }
        }
        return;
    }
    let mut acc = [[0.0f64; 4]; K];
    let interior = &up[r..n - r];
    let chunks = interior.len() / 4;
    for c in 0..chunks {
        let x0 = 4 * c;
        let u: &[f64; 4] = interior[x0..x0 + 4].try_into().unwrap();
        let s: &[f64] = &src[x0..x0 + 4 + K - 1];
        for j in 0..K {
            for l in 0..4 {
                acc[j][l] += u[l] * s[l + j];
            }
        }
    }
    let mut total = [0.0f64; K];
    for j in 0..K {
        total[j] = (acc[j][0] + acc[j][1]) + (acc[j][2] + acc[j][3]);
    }
    for x in r + 4 * chunks..n - r {
        for (j, t) in total.iter_mut().enumerate() {
            *t += up[x] * src[x + j - r];
        }
    }
    for x in (0..r).chain(n - r..n) {
        for (j, t) in total.iter_mut().enumerate() {
            if let Some(&s) = (x + j).checked_sub(r).and_then(|i| src.get(i)) {
                *t += up[x] * s;
            }
        }
    }
    for (o, t) in out.iter_mut().zip(total) {
        *o += t;
    }
}

#[inline(always)]
fn row_tap_gradient(up: &[f64], src: &[f64], out: &mut [f64]) {
    match out.len() {
        3 => row_tap_gradient_fixed::<3>(up, src, out),
        5 => row_tap_gradient_fixed::<5>(up, src, out),
        7 => row_tap_gradient_fixed::<7>(up, src, out),
        _ => {
            let mut scratch = vec![0.0; out.len()];
            correlate_same_backward_acc(src, out, up, None, &mut scratch);
            for (o, s) in out.iter_mut().zip(scratch) {
                *o += s;
            }
        }
    }
}

#[inline(always)]
fn conv2d_same_into_impl(
    g: Conv2dGeometry,
    input: &[f64],
    kernels: &[f64],
    biases: &[f64],
    out: &mut [f64],
) {
    let (plane, w) = (g.plane(), g.w);
    let ry = g.kh / 2;
    for co in 0..g.cout {
        let out_c = &mut out[co * plane..(co + 1) * plane];
        out_c.fill(biases[co]);
        for ci in 0..g.cin {
            let in_c = &input[ci * plane..(ci + 1) * plane];
            for dy in 0..g.kh {
                let taps = &kernels[g.kidx(co, ci, dy, 0)..g.kidx(co, ci, dy, 0) + g.kw];
                let (ylo, yhi) = tap_range(g.h, ry, dy);
                for y in ylo..yhi {
                    let iy = y + dy - ry;
                    row_correlate(
                        &in_c[iy * w..(iy + 1) * w],
                        taps,
                        &mut out_c[y * w..(y + 1) * w],
                    );
                }
            }
        }
    }
}

#[inline(always)]
fn conv2d_same_backward_impl(
    g: Conv2dGeometry,
    input: &[f64],
    kernels: &[f64],
    upstream: &[f64],
    mut grad_input: Option<&mut [f64]>,
    grad_kernels: &mut [f64],
    grad_biases: &mut [f64],
) {
    let (plane, w) = (g.plane(), g.w);
    let ry = g.kh / 2;
    let mut flipped = vec![0.0; g.kw];
    for co in 0..g.cout {
        let up_c = &upstream[co * plane..(co + 1) * plane];
        grad_biases[co] += up_c.iter().sum::<f64>();
        for ci in 0..g.cin {
            let in_c = &input[ci * plane..(ci + 1) * plane];
            for dy in 0..g.kh {
                let k0 = g.kidx(co, ci, dy, 0);
                let (ylo, yhi) = tap_range(g.h, ry, dy);
                for y in ylo..yhi {
                    let iy = y + dy - ry;
                    row_tap_gradient(
                        &up_c[y * w..(y + 1) * w],
                        &in_c[iy * w..(iy + 1) * w],
                        &mut grad_kernels[k0..k0 + g.kw],
                    );
                }
                if let Some(gi) = grad_input.as_deref_mut() {
                    // transpose of a correlation: correlate with the reversed taps
                    for (f, &k) in flipped.iter_mut().zip(kernels[k0..k0 + g.kw].iter().rev()) {
                        *f = k;
                    }
                    let gi_c = &mut gi[ci * plane..(ci + 1) * plane];
                    for y in ylo..yhi {
                        let iy = y + dy - ry;
                        row_correlate(
                            &up_c[y * w..(y + 1) * w],
                            &flipped,
                            &mut gi_c[iy * w..(iy + 1) * w],
                        );
                    }
                }
            }
        }
    }
}

#[cfg(target_arch = "x86_64")]
fn has_avx2_fma() -> bool {
    std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma")
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn conv2d_same_into_avx2(
    g: Conv2dGeometry,
    input: &[f64],
    kernels: &[f64],
    biases: &[f64],
    out: &mut [f64],
) {
    conv2d_same_into_impl(g, input, kernels, biases, out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn conv2d_same_backward_avx2(
    g: Conv2dGeometry,
    input: &[f64],
    kernels: &[f64],
    upstream: &[f64],
    grad_input: Option<&mut [f64]>,
    grad_kernels: &mut [f64],
    grad_biases: &mut [f64],
) {
    conv2d_same_backward_impl(g, input, kernels, upstream, grad_input, grad_kernels, grad_biases)
}

/// Same-padded multi-channel 2D correlation into `out` (`cout × h × w`).
pub(crate) fn conv2d_same_into(
    g: Conv2dGeometry,
    input: &[f64],
    kernels: &[f64],
    biases: &[f64],
    out: &mut [f64],
) {
    #[cfg(target_arch = "x86_64")]
    if has_avx2_fma() {
        // SAFETY: the required CPU features were detected at runtime.
        return unsafe { conv2d_same_into_avx2(g, input, kernels, biases, out) };
    }
    conv2d_same_into_impl(g, input, kernels, biases, out)
}

/// Accumulates input, kernel and bias gradients of [`conv2d_same_into`].
pub(crate) fn conv2d_same_backward_acc(
    g: Conv2dGeometry,
    input: &[f64],
    kernels: &[f64],
    upstream: &[f64],
    grad_input: Option<&mut [f64]>,
    grad_kernels: &mut [f64],
    grad_biases: &mut [f64],
) {
    #[cfg(target_arch = "x86_64")]
    if has_avx2_fma() {
        // SAFETY: the required CPU features were detected at runtime.
        return unsafe {
            conv2d_same_backward_avx2(g, input, kernels, upstream, grad_input, grad_kernels, grad_biases)
        };
    }
    conv2d_same_backward_impl(g, input, kernels, upstream, grad_input, grad_kernels, grad_biases)
}

fn conv_geometry(input: &Tensor, kernels: &Tensor, biases: &Tensor) -> Result<Conv2dGeometry> {
    input.expect_rank("conv2d_same", 3)?;
    kernels.expect_rank("conv2d_same", 4)?;
    let (is, ks) = (input.shape(), kernels.shape());
    if ks[1] != is[0] {
        return Err(Error::shape("conv2d_same", &[ks[0], is[0], ks[2], ks[3]], ks));
    }
    check_odd("conv2d_same", ks[2])?;
    check_odd("conv2d_same", ks[3])?;
    biases.expect_shape("conv2d_same", &[ks[0]])?;
    Ok(Conv2dGeometry {
        cin: is[0],
        cout: ks[0],
        h: is[1],
        w: is[2],
        kh: ks[2],
        kw: ks[3],
    })
}

/// Multi-channel same-padded 2D cross-correlation with per-channel bias.
///
/// `input` is `(C_in, H, W)`, `kernels` is `(C_out, C_in, kh, kw)` with odd
/// `kh`, `kw`, and `biases` is `(C_out)`. Output is `(C_out, H, W)`.
pub fn conv2d_same(input: &Tensor, kernels: &Tensor, biases: &Tensor) -> Result<Tensor> {
    let g = conv_geometry(input, kernels, biases)?;
    let mut out = vec![0.0; g.cout * g.plane()];
    conv2d_same_into(g, input.data(), kernels.data(), biases.data(), &mut out);
    Tensor::new(vec![g.cout, g.h, g.w], out)
}

/// Returns `(grad_input, grad_kernels, grad_biases)`.
pub fn conv2d_same_backward(
    input: &Tensor,
    kernels: &Tensor,
    upstream: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let biases = Tensor::zeros(&[kernels.shape().first().copied().unwrap_or(1)]);
    let g = conv_geometry(input, kernels, &biases)?;
    upstream.expect_shape("conv2d_same_backward", &[g.cout, g.h, g.w])?;
    let mut gi = vec![0.0; input.len()];
    let mut gk = vec![0.0; kernels.len()];
    let mut gb = vec![0.0; g.cout];
    conv2d_same_backward_acc(
        g,
        input.data(),
        kernels.data(),
        upstream.data(),
        Some(&mut gi),
        &mut gk,
        &mut gb,
    );
    Ok((
        Tensor::new(input.shape().to_vec(), gi)?,
        Tensor::new(kernels.shape().to_vec(), gk)?,
        Tensor::vector(gb)?,
    ))
}
