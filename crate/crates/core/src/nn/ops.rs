//! Forward/backward pairs for every layer the models use.
//!
//! Conventions:
//! - conv kernels are `(out_channels, in_channels, width)`, biases `(out,)`,
//!   linear weights `(out_features, in_features)`.
//! - 1D convolutions use zero "same" padding so the time length is preserved.
//!   For even kernel widths the extra zero goes on the left
//!   (`pad_left = k / 2`, `pad_right = (k - 1) / 2`), i.e. width-2 kernels are
//!   causal.
//! - transposed convolution doubles the time length: zero-insertion
//!   upsampling (even slots carry the input) followed by a same-padded
//!   convolution, so it is the exact adjoint of a stride-2 convolution with
//!   the flipped kernel.
//!
//! Backward functions return gradients by value and never touch shared state.

use super::array::{Array3, Mat, Scalar, Tensor};
use crate::{Error, Result};

#[inline]
fn pad_left(k: usize) -> usize {
    k / 2
}

fn check_conv_shapes<F: Scalar>(x: &Array3<F>, w: &Tensor<F>, b: &Tensor<F>, op: &str) -> Result<()> {
    let ws = w.shape();
    if ws.len() != 3 {
        return Err(Error::Shape(format!("{op}: kernel must be rank 3, got {ws:?}")));
    }
    if ws[1] != x.channels() {
        return Err(Error::Shape(format!(
            "{op}: input has {} channels but kernel expects {}",
            x.channels(),
            ws[1]
        )));
    }
    if ws[2] > x.time() {
        return Err(Error::Shape(format!(
            "{op}: kernel width {} exceeds input time length {}",
            ws[2],
            x.time()
        )));
    }
    if b.shape() != [ws[0]] {
        return Err(Error::Shape(format!(
            "{op}: bias shape {:?} does not match {} output channels",
            b.shape(),
            ws[0]
        )));
    }
    Ok(())
}

/// Same-padded 1D convolution; output time length equals input time length.
pub fn conv1d<F: Scalar>(x: &Array3<F>, w: &Tensor<F>, b: &Tensor<F>) -> Result<Array3<F>> {
    check_conv_shapes(x, w, b, "conv1d")?;
    Ok(conv1d_core(x, w, b))
}

fn conv1d_core<F: Scalar>(x: &Array3<F>, w: &Tensor<F>, b: &Tensor<F>) -> Array3<F> {
    let (nb, cin, t) = (x.batch(), x.channels(), x.time());
    let cout = w.shape()[0];
    let k = w.shape()[2];
    let pl = pad_left(k) as isize;
    let mut y = Array3::zeros(nb, cout, t);
    for bi in 0..nb {
        for o in 0..cout {
            let bias = b.data()[o];
            y.series_mut(bi, o).iter_mut().for_each(|v| *v = bias);
        }
        for i in 0..cin {
            let x_row = x.series(bi, i).to_vec();
            for o in 0..cout {
                let w_base = (o * cin + i) * k;
                let y_row = y.series_mut(bi, o);
                for j in 0..k {
                    let wv = w.data()[w_base + j];
                    let shift = j as isize - pl;
                    let t_lo = (-shift).max(0) as usize;
                    let t_hi = ((t as isize - shift).min(t as isize)).max(0) as usize;
                    if t_lo >= t_hi {
                        continue;
                    }
                    let src = &x_row[(t_lo as isize + shift) as usize..(t_hi as isize + shift) as usize];
                    for (dst, s) in y_row[t_lo..t_hi].iter_mut().zip(src) {
                        *dst += wv * *s;
                    }
                }
            }
        }
    }
    y
}

/// Gradients of [`conv1d`] w.r.t. input, kernel, and bias.
pub fn conv1d_backward<F: Scalar>(
    x: &Array3<F>,
    w: &Tensor<F>,
    dy: &Array3<F>,
) -> Result<(Array3<F>, Tensor<F>, Tensor<F>)> {
    let ws = w.shape();
    if dy.channels() != ws[0] || dy.time() != x.time() || dy.batch() != x.batch() {
        return Err(Error::Shape(format!(
            "conv1d backward: upstream grad ({}, {}, {}) does not match output ({}, {}, {})",
            dy.batch(),
            dy.channels(),
            dy.time(),
            x.batch(),
            ws[0],
            x.time()
        )));
    }
    Ok(conv1d_backward_core(x, w, dy))
}

fn conv1d_backward_core<F: Scalar>(
    x: &Array3<F>,
    w: &Tensor<F>,
    dy: &Array3<F>,
) -> (Array3<F>, Tensor<F>, Tensor<F>) {
    let (nb, cin, t) = (x.batch(), x.channels(), x.time());
    let cout = w.shape()[0];
    let k = w.shape()[2];
    let pl = pad_left(k) as isize;
    let mut dx = Array3::zeros(nb, cin, t);
    let mut dw = Tensor::zeros(w.shape());
    let mut db = Tensor::zeros(&[cout]);

    for bi in 0..nb {
        for o in 0..cout {
            let dy_row = dy.series(bi, o).to_vec();
            db.data_mut()[o] += dy_row.iter().copied().sum::<F>();
            for i in 0..cin {
                let x_row = x.series(bi, i);
                let w_base = (o * cin + i) * k;
                // dw[o,i,j] = sum_t dy[t] * x[t + j - pl]
                for j in 0..k {
                    let shift = j as isize - pl;
                    let t_lo = (-shift).max(0) as usize;
                    let t_hi = ((t as isize - shift).min(t as isize)).max(0) as usize;
                    if t_lo >= t_hi {
                        continue;
                    }
                    let src = &x_row[(t_lo as isize + shift) as usize..(t_hi as isize + shift) as usize];
                    let mut acc = F::zero();
                    for (g, s) in dy_row[t_lo..t_hi].iter().zip(src) {
                        acc += *g * *s;
                    }
                    dw.data_mut()[w_base + j] += acc;
                }
                // dx[s] += sum_j w[j] * dy[s - j + pl]
                let dx_row = dx.series_mut(bi, i);
                for j in 0..k {
                    let wv = w.data()[w_base + j];
                    let shift = j as isize - pl;
                    let s_lo = shift.max(0) as usize;
                    let s_hi = ((t as isize + shift).min(t as isize)).max(0) as usize;
                    if s_lo >= s_hi {
                        continue;
                    }
                    let src = &dy_row[(s_lo as isize - shift) as usize..(s_hi as isize - shift) as usize];
                    for (d, g) in dx_row[s_lo..s_hi].iter_mut().zip(src) {
                        *d += wv * *g;
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

/// Average pooling with window 2, stride 2. Requires an even time length.
pub fn avg_pool1d<F: Scalar>(x: &Array3<F>) -> Result<Array3<F>> {
    if x.time() % 2 != 0 {
        return Err(Error::Shape(format!(
            "avg_pool1d: time length {} is odd; pooling halves the length exactly",
            x.time()
        )));
    }
    let (nb, c, t) = (x.batch(), x.channels(), x.time());
    let half = F::from_f64(0.5);
    let mut y = Array3::zeros(nb, c, t / 2);
    for bi in 0..nb {
        for ci in 0..c {
            let src = x.series(bi, ci);
            for (u, dst) in y.series_mut(bi, ci).iter_mut().enumerate() {
                *dst = (src[2 * u] + src[2 * u + 1]) * half;
            }
        }
    }
    Ok(y)
}

/// Backward of [`avg_pool1d`]: each upstream value splits evenly over its window.
pub fn avg_pool1d_backward<F: Scalar>(dy: &Array3<F>) -> Array3<F> {
    let (nb, c, tu) = (dy.batch(), dy.channels(), dy.time());
    let half = F::from_f64(0.5);
    let mut dx = Array3::zeros(nb, c, tu * 2);
    for bi in 0..nb {
        for ci in 0..c {
            let src = dy.series(bi, ci).to_vec();
            let dst = dx.series_mut(bi, ci);
            for (u, g) in src.iter().enumerate() {
                let gh = *g * half;
                dst[2 * u] = gh;
                dst[2 * u + 1] = gh;
            }
        }
    }
    dx
}

fn upsample2<F: Scalar>(x: &Array3<F>) -> Array3<F> {
    let (nb, c, t) = (x.batch(), x.channels(), x.time());
    let mut up = Array3::zeros(nb, c, 2 * t);
    for bi in 0..nb {
        for ci in 0..c {
            let src = x.series(bi, ci).to_vec();
            let dst = up.series_mut(bi, ci);
            for (t_i, v) in src.iter().enumerate() {
                dst[2 * t_i] = *v;
            }
        }
    }
    up
}

/// Stride-2 transposed 1D convolution: doubles the time length.
pub fn conv_transpose1d<F: Scalar>(x: &Array3<F>, w: &Tensor<F>, b: &Tensor<F>) -> Result<Array3<F>> {
    // width is checked against the upsampled (doubled) length
    let up = upsample2(x);
    check_conv_shapes(&up, w, b, "conv_transpose1d")?;
    Ok(conv1d_core(&up, w, b))
}

/// Gradients of [`conv_transpose1d`] w.r.t. input, kernel, and bias.
pub fn conv_transpose1d_backward<F: Scalar>(
    x: &Array3<F>,
    w: &Tensor<F>,
    dy: &Array3<F>,
) -> Result<(Array3<F>, Tensor<F>, Tensor<F>)> {
    if dy.time() != 2 * x.time() {
        return Err(Error::Shape(format!(
            "conv_transpose1d backward: upstream time {} is not twice the input time {}",
            dy.time(),
            x.time()
        )));
    }
    let up = upsample2(x);
    let (d_up, dw, db) = conv1d_backward(&up, w, dy)?;
    let (nb, cin, t) = (x.batch(), x.channels(), x.time());
    let mut dx = Array3::zeros(nb, cin, t);
    for bi in 0..nb {
        for ci in 0..cin {
            let src = d_up.series(bi, ci).to_vec();
            for (t_i, d) in dx.series_mut(bi, ci).iter_mut().enumerate() {
                *d = src[2 * t_i];
            }
        }
    }
    Ok((dx, dw, db))
}

/// Input gradient of [`conv1d`] alone (weight gradients skipped). The
/// inversion hot path differentiates w.r.t. the latent code only.
pub fn conv1d_backward_input<F: Scalar>(w: &Tensor<F>, dy: &Array3<F>) -> Array3<F> {
    let cout = w.shape()[0];
    let cin = w.shape()[1];
    let k = w.shape()[2];
    let pl = pad_left(k) as isize;
    let (nb, t) = (dy.batch(), dy.time());
    debug_assert_eq!(dy.channels(), cout);
    let mut dx = Array3::zeros(nb, cin, t);
    for bi in 0..nb {
        for o in 0..cout {
            let dy_row = dy.series(bi, o).to_vec();
            for i in 0..cin {
                let w_base = (o * cin + i) * k;
                let dx_row = dx.series_mut(bi, i);
                for j in 0..k {
                    let wv = w.data()[w_base + j];
                    let shift = j as isize - pl;
                    let s_lo = shift.max(0) as usize;
                    let s_hi = ((t as isize + shift).min(t as isize)).max(0) as usize;
                    if s_lo >= s_hi {
                        continue;
                    }
                    let src = &dy_row[(s_lo as isize - shift) as usize..(s_hi as isize - shift) as usize];
                    for (d, g) in dx_row[s_lo..s_hi].iter_mut().zip(src) {
                        *d += wv * *g;
                    }
                }
            }
        }
    }
    dx
}

/// Input gradient of [`conv_transpose1d`] alone.
pub fn conv_transpose1d_backward_input<F: Scalar>(w: &Tensor<F>, dy: &Array3<F>) -> Array3<F> {
    let d_up = conv1d_backward_input(w, dy);
    let (nb, cin, t2) = (d_up.batch(), d_up.channels(), d_up.time());
    let mut dx = Array3::zeros(nb, cin, t2 / 2);
    for bi in 0..nb {
        for ci in 0..cin {
            let src = d_up.series(bi, ci).to_vec();
            for (t_i, d) in dx.series_mut(bi, ci).iter_mut().enumerate() {
                *d = src[2 * t_i];
            }
        }
    }
    dx
}

/// Input gradient of [`linear`] alone.
pub fn linear_backward_input<F: Scalar>(w: &Tensor<F>, dy: &Mat<F>) -> Mat<F> {
    let (out_f, in_f) = (w.shape()[0], w.shape()[1]);
    debug_assert_eq!(dy.cols(), out_f);
    let mut dx = Mat::zeros(dy.rows(), in_f);
    for r in 0..dy.rows() {
        let dy_row = dy.row(r).to_vec();
        let dx_row = dx.row_mut(r);
        for o in 0..out_f {
            let g = dy_row[o];
            let w_row = &w.data()[o * in_f..(o + 1) * in_f];
            for (d, wv) in dx_row.iter_mut().zip(w_row) {
                *d += g * *wv;
            }
        }
    }
    dx
}

/// Affine map `y = x W^T + b` on (batch, features) matrices.
pub fn linear<F: Scalar>(x: &Mat<F>, w: &Tensor<F>, b: &Tensor<F>) -> Result<Mat<F>> {
    let ws = w.shape();
    if ws.len() != 2 || ws[1] != x.cols() {
        return Err(Error::Shape(format!(
            "linear: input has {} features but weights are {:?}",
            x.cols(),
            ws
        )));
    }
    if b.shape() != [ws[0]] {
        return Err(Error::Shape(format!(
            "linear: bias shape {:?} does not match {} outputs",
            b.shape(),
            ws[0]
        )));
    }
    let (out_f, in_f) = (ws[0], ws[1]);
    let mut y = Mat::zeros(x.rows(), out_f);
    for r in 0..x.rows() {
        let x_row = x.row(r).to_vec();
        let y_row = y.row_mut(r);
        for o in 0..out_f {
            let w_row = &w.data()[o * in_f..(o + 1) * in_f];
            let mut acc = b.data()[o];
            for (xv, wv) in x_row.iter().zip(w_row) {
                acc += *xv * *wv;
            }
            y_row[o] = acc;
        }
    }
    Ok(y)
}

/// Gradients of [`linear`] w.r.t. input, weights, and bias.
pub fn linear_backward<F: Scalar>(
    x: &Mat<F>,
    w: &Tensor<F>,
    dy: &Mat<F>,
) -> Result<(Mat<F>, Tensor<F>, Tensor<F>)> {
    let ws = w.shape();
    if dy.cols() != ws[0] || dy.rows() != x.rows() {
        return Err(Error::Shape(format!(
            "linear backward: upstream grad ({}, {}) does not match output ({}, {})",
            dy.rows(),
            dy.cols(),
            x.rows(),
            ws[0]
        )));
    }
    let (out_f, in_f) = (ws[0], ws[1]);
    let mut dx = Mat::zeros(x.rows(), in_f);
    let mut dw = Tensor::zeros(ws);
    let mut db = Tensor::zeros(&[out_f]);
    for r in 0..x.rows() {
        let x_row = x.row(r).to_vec();
        let dy_row = dy.row(r).to_vec();
        let dx_row = dx.row_mut(r);
        for o in 0..out_f {
            let g = dy_row[o];
            db.data_mut()[o] += g;
            let w_row = &w.data()[o * in_f..(o + 1) * in_f];
            for (d, wv) in dx_row.iter_mut().zip(w_row) {
                *d += g * *wv;
            }
            let dw_row = &mut dw.data_mut()[o * in_f..(o + 1) * in_f];
            for (dwv, xv) in dw_row.iter_mut().zip(&x_row) {
                *dwv += g * *xv;
            }
        }
    }
    Ok((dx, dw, db))
}

/// Elementwise `max(0, x)`; the subgradient at 0 is taken as 0.
pub fn relu<F: Scalar>(x: &[F]) -> Vec<F> {
    x.iter().map(|v| if *v > F::zero() { *v } else { F::zero() }).collect()
}

/// Backward of [`relu`] given the forward *input*.
pub fn relu_backward<F: Scalar>(x: &[F], dy: &[F]) -> Vec<F> {
    x.iter()
        .zip(dy)
        .map(|(v, g)| if *v > F::zero() { *g } else { F::zero() })
        .collect()
}

pub fn relu3<F: Scalar>(x: &Array3<F>) -> Array3<F> {
    Array3::from_vec(x.batch(), x.channels(), x.time(), relu(x.data())).expect("same shape")
}

pub fn relu3_backward<F: Scalar>(x: &Array3<F>, dy: &Array3<F>) -> Array3<F> {
    Array3::from_vec(x.batch(), x.channels(), x.time(), relu_backward(x.data(), dy.data()))
        .expect("same shape")
}

/// Cache produced by the batch-norm training forward pass.
pub struct BatchNormCache<F> {
    /// Normalized activations, same layout as the input.
    xhat: Vec<F>,
    /// Per-channel 1/sqrt(var + eps).
    inv_std: Vec<F>,
    batch: usize,
    channels: usize,
    time: usize,
}

/// Batch normalization over (batch, time) per channel, training mode.
///
/// Normalizes to zero mean / unit variance (epsilon-stabilized), applies
/// scale/shift, and updates the running statistics in place by exponential
/// moving average.
#[allow(clippy::too_many_arguments)]
pub fn batchnorm1d_train<F: Scalar>(
    x: &Array3<F>,
    gamma: &Tensor<F>,
    beta: &Tensor<F>,
    running_mean: &mut Tensor<F>,
    running_var: &mut Tensor<F>,
    eps: F,
    momentum: F,
) -> Result<(Array3<F>, BatchNormCache<F>)> {
    let (nb, c, t) = (x.batch(), x.channels(), x.time());
    if nb * t < 2 {
        return Err(Error::Shape(format!(
            "batchnorm1d: train mode needs more than one element per channel, got batch*time = {}",
            nb * t
        )));
    }
    check_bn_params(c, gamma, beta, running_mean, running_var)?;
    let m = F::from_f64((nb * t) as f64);
    let mut y = Array3::zeros(nb, c, t);
    let mut cache = BatchNormCache {
        xhat: vec![F::zero(); nb * c * t],
        inv_std: vec![F::zero(); c],
        batch: nb,
        channels: c,
        time: t,
    };
    for ci in 0..c {
        let mut mean = F::zero();
        for bi in 0..nb {
            mean += x.series(bi, ci).iter().copied().sum::<F>();
        }
        mean /= m;
        let mut var = F::zero();
        for bi in 0..nb {
            for v in x.series(bi, ci) {
                let d = *v - mean;
                var += d * d;
            }
        }
        var /= m;
        let inv_std = (var + eps).sqrt().recip();
        cache.inv_std[ci] = inv_std;
        let (g, s) = (gamma.data()[ci], beta.data()[ci]);
        for bi in 0..nb {
            let base = (bi * c + ci) * t;
            let src = x.series(bi, ci);
            for (ti, v) in src.iter().enumerate() {
                let xh = (*v - mean) * inv_std;
                cache.xhat[base + ti] = xh;
                y.data_mut()[base + ti] = g * xh + s;
            }
        }
        let one = F::one();
        running_mean.data_mut()[ci] = (one - momentum) * running_mean.data()[ci] + momentum * mean;
        running_var.data_mut()[ci] = (one - momentum) * running_var.data()[ci] + momentum * var;
    }
    Ok((y, cache))
}

/// Gradients of [`batchnorm1d_train`] w.r.t. input, scale, and shift.
pub fn batchnorm1d_train_backward<F: Scalar>(
    cache: &BatchNormCache<F>,
    gamma: &Tensor<F>,
    dy: &Array3<F>,
) -> (Array3<F>, Tensor<F>, Tensor<F>) {
    let (nb, c, t) = (cache.batch, cache.channels, cache.time);
    let m = F::from_f64((nb * t) as f64);
    let mut dx = Array3::zeros(nb, c, t);
    let mut dgamma = Tensor::zeros(&[c]);
    let mut dbeta = Tensor::zeros(&[c]);
    for ci in 0..c {
        let mut sum_dy = F::zero();
        let mut sum_dy_xhat = F::zero();
        for bi in 0..nb {
            let base = (bi * c + ci) * t;
            for ti in 0..t {
                let g = dy.data()[base + ti];
                sum_dy += g;
                sum_dy_xhat += g * cache.xhat[base + ti];
            }
        }
        dgamma.data_mut()[ci] = sum_dy_xhat;
        dbeta.data_mut()[ci] = sum_dy;
        let scale = gamma.data()[ci] * cache.inv_std[ci] / m;
        for bi in 0..nb {
            let base = (bi * c + ci) * t;
            for ti in 0..t {
                let g = dy.data()[base + ti];
                dx.data_mut()[base + ti] =
                    scale * (m * g - sum_dy - cache.xhat[base + ti] * sum_dy_xhat);
            }
        }
    }
    (dx, dgamma, dbeta)
}

/// Batch normalization in eval mode: a deterministic affine map using the
/// running statistics.
pub fn batchnorm1d_eval<F: Scalar>(
    x: &Array3<F>,
    gamma: &Tensor<F>,
    beta: &Tensor<F>,
    running_mean: &Tensor<F>,
    running_var: &Tensor<F>,
    eps: F,
) -> Result<Array3<F>> {
    let (nb, c, t) = (x.batch(), x.channels(), x.time());
    check_bn_params(c, gamma, beta, running_mean, running_var)?;
    let mut y = Array3::zeros(nb, c, t);
    for ci in 0..c {
        let inv_std = (running_var.data()[ci] + eps).sqrt().recip();
        let mean = running_mean.data()[ci];
        let (g, s) = (gamma.data()[ci], beta.data()[ci]);
        for bi in 0..nb {
            let src = x.series(bi, ci);
            let base = (bi * c + ci) * t;
            for (ti, v) in src.iter().enumerate() {
                y.data_mut()[base + ti] = g * (*v - mean) * inv_std + s;
            }
        }
    }
    Ok(y)
}

fn check_bn_params<F: Scalar>(
    c: usize,
    gamma: &Tensor<F>,
    beta: &Tensor<F>,
    rm: &Tensor<F>,
    rv: &Tensor<F>,
) -> Result<()> {
    for (name, t) in [("scale", gamma), ("shift", beta), ("running mean", rm), ("running var", rv)] {
        if t.shape() != [c] {
            return Err(Error::Shape(format!(
                "batchnorm1d: {name} shape {:?} does not match {c} channels",
                t.shape()
            )));
        }
    }
    Ok(())
}

/// Mean cross-entropy of softmax(logits) against integer labels.
///
/// Returns the loss and the softmax probabilities (the backward cache).
pub fn softmax_cross_entropy<F: Scalar>(logits: &Mat<F>, labels: &[usize]) -> Result<(F, Mat<F>)> {
    if labels.len() != logits.rows() {
        return Err(Error::Shape(format!(
            "softmax_cross_entropy: {} labels for {} logit rows",
            labels.len(),
            logits.rows()
        )));
    }
    let classes = logits.cols();
    let mut probs = Mat::zeros(logits.rows(), classes);
    let mut loss = F::zero();
    for r in 0..logits.rows() {
        let label = labels[r];
        if label >= classes {
            return Err(Error::Data(format!(
                "softmax_cross_entropy: label {label} out of range for {classes} classes"
            )));
        }
        let row = logits.row(r);
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let mut denom = F::zero();
        for (c, v) in row.iter().enumerate() {
            let e = (*v - max).exp();
            *probs.at_mut(r, c) = e;
            denom += e;
        }
        for c in 0..classes {
            *probs.at_mut(r, c) /= denom;
        }
        loss += denom.ln() - (row[label] - max);
    }
    Ok((loss / F::from_f64(logits.rows() as f64), probs))
}

/// Backward of [`softmax_cross_entropy`]: `(softmax - onehot) / batch`.
pub fn softmax_cross_entropy_backward<F: Scalar>(probs: &Mat<F>, labels: &[usize]) -> Mat<F> {
    let inv_b = F::from_f64(probs.rows() as f64).recip();
    let mut d = probs.clone();
    for (r, label) in labels.iter().enumerate() {
        *d.at_mut(r, *label) -= F::one();
        for v in d.row_mut(r) {
            *v *= inv_b;
        }
    }
    d
}
