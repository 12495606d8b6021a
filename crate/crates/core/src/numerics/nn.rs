//! Neural-network primitives with their hand-written backward passes.

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Normalises each row of a `[tokens × features]` matrix to zero mean and
/// unit (biased) variance, then applies `gain` and `bias` per feature.
pub fn layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor> {
    let (t, f) = x.dims2()?;
    check_feature_vec(gain, f)?;
    check_feature_vec(bias, f)?;
    if !(eps > 0.0) {
        return Err(Error::usage(format!(
            "layer_norm eps must be > 0, got {eps}"
        )));
    }
    let mut out = vec![0.0; t * f];
    for (row, o) in x.data().chunks(f).zip(out.chunks_mut(f)) {
        let (mean, inv_std) = row_stats(row, eps);
        for j in 0..f {
            o[j] = (row[j] - mean) * inv_std * gain.data()[j] + bias.data()[j];
        }
    }
    Tensor::new(&[t, f], out)
}

fn check_feature_vec(v: &Tensor, f: usize) -> Result<()> {
    if v.len() != f {
        return Err(Error::dim(format!(
            "per-feature vector has {} entries, expected {f}",
            v.len()
        )));
    }
    Ok(())
}

fn row_stats(row: &[f64], eps: f64) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + eps).sqrt())
}

/// Returns `(grad_x, grad_gain, grad_bias)`.
pub fn layer_norm_backward(
    x: &Tensor,
    gain: &Tensor,
    eps: f64,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (t, f) = x.dims2()?;
    x.expect_same_shape(grad_out)?;
    let mut gx = vec![0.0; t * f];
    let mut gg = vec![0.0; f];
    let mut gb = vec![0.0; f];
    let mut xhat = vec![0.0; f];
    let mut dxhat = vec![0.0; f];
    for i in 0..t {
        let row = &x.data()[i * f..(i + 1) * f];
        let g = &grad_out.data()[i * f..(i + 1) * f];
        let (mean, inv_std) = row_stats(row, eps);
        for j in 0..f {
            xhat[j] = (row[j] - mean) * inv_std;
            dxhat[j] = g[j] * gain.data()[j];
            gg[j] += g[j] * xhat[j];
            gb[j] += g[j];
        }
        let mean_d = dxhat.iter().sum::<f64>() / f as f64;
        let mean_dx = dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / f as f64;
        for j in 0..f {
            gx[i * f + j] = inv_std * (dxhat[j] - mean_d - xhat[j] * mean_dx);
        }
    }
    Ok((
        Tensor::new(&[t, f], gx)?,
        Tensor::new(gain.shape(), gg)?,
        Tensor::new(gain.shape(), gb)?,
    ))
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Tensor) -> Result<Tensor> {
    let (r, c) = x.dims2()?;
    let mut out = vec![0.0; r * c];
    for (row, o) in x.data().chunks(c).zip(out.chunks_mut(c)) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (oj, &v) in o.iter_mut().zip(row) {
            *oj = (v - max).exp();
            sum += *oj;
        }
        let inv = 1.0 / sum;
        for oj in o.iter_mut() {
            *oj *= inv;
        }
    }
    Tensor::new(&[r, c], out)
}

/// Backward of [`softmax_rows`] given its output `y`.
pub fn softmax_rows_backward(y: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    let (r, c) = y.dims2()?;
    y.expect_same_shape(grad_out)?;
    let mut gx = vec![0.0; r * c];
    for i in 0..r {
        let yr = &y.data()[i * c..(i + 1) * c];
        let gr = &grad_out.data()[i * c..(i + 1) * c];
        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
        for j in 0..c {
            gx[i * c + j] = yr[j] * (gr[j] - dot);
        }
    }
    Tensor::new(&[r, c], gx)
}

/// 3×3 convolution, stride 1, zero padding 1.
///
/// `x` is `[C_in × H × W]`, `kernel` is `[C_out × C_in × 3 × 3]`, `bias`
/// (optional) is `[C_out]`. The output is `[C_out × H × W]`.
pub fn conv2d(x: &Tensor, kernel: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let (cin, h, w) = x.dims3()?;
    let cout = check_kernel(kernel, cin)?;
    if let Some(b) = bias {
        if b.len() != cout {
            return Err(Error::dim(format!(
                "conv bias has {} entries for {cout} output channels",
                b.len()
            )));
        }
    }
    let plane = h * w;
    let mut out = vec![0.0; cout * plane];
    let xd = x.data();
    let kd = kernel.data();
    for co in 0..cout {
        let o = &mut out[co * plane..(co + 1) * plane];
        if let Some(b) = bias {
            o.fill(b.data()[co]);
        }
        for ci in 0..cin {
            let xp = &xd[ci * plane..(ci + 1) * plane];
            let kbase = (co * cin + ci) * 9;
            for ky in 0..3 {
                for kx in 0..3 {
                    let k = kd[kbase + ky * 3 + kx];
                    if k == 0.0 {
                        continue;
                    }
                    let (y0, y1) = valid_range(ky, h);
                    let (x0, x1) = valid_range(kx, w);
                    for y in y0..y1 {
                        let sy = y + ky - 1;
                        let orow = &mut o[y * w + x0..y * w + x1];
                        let xrow = &xp[sy * w + x0 + kx - 1..sy * w + x1 + kx - 1];
                        for (ov, &xv) in orow.iter_mut().zip(xrow) {
                            *ov += k * xv;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(&[cout, h, w], out)
}

/// Output positions `y` for which `y + k - 1` lies inside `0..n`.
fn valid_range(k: usize, n: usize) -> (usize, usize) {
    let lo = if k == 0 { 1 } else { 0 };
    let hi = if k == 2 { n - 1 } else { n };
    (lo.min(hi), hi)
}

fn check_kernel(kernel: &Tensor, cin: usize) -> Result<usize> {
    match kernel.shape() {
        &[cout, kin, 3, 3] if kin == cin => Ok(cout),
        &[_, kin, 3, 3] => Err(Error::dim(format!(
            "kernel expects {kin} input channels, input has {cin}"
        ))),
        s => Err(Error::dim(format!(
            "kernel must be [C_out x C_in x 3 x 3], got {s:?}"
        ))),
    }
}

/// Backward of [`conv2d`]. Returns `(grad_x, grad_kernel, grad_bias)`.
pub fn conv2d_backward(
    x: &Tensor,
    kernel: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (cin, h, w) = x.dims3()?;
    let cout = check_kernel(kernel, cin)?;
    let plane = h * w;
    let xd = x.data();
    let kd = kernel.data();
    let gd = grad_out.data();
    let mut gx = vec![0.0; cin * plane];
    let mut gk = vec![0.0; kernel.len()];
    let mut gb = vec![0.0; cout];
    for co in 0..cout {
        let g = &gd[co * plane..(co + 1) * plane];
        gb[co] = g.iter().sum();
        for ci in 0..cin {
            let xp = &xd[ci * plane..(ci + 1) * plane];
            let gxp = &mut gx[ci * plane..(ci + 1) * plane];
            let kbase = (co * cin + ci) * 9;
            for ky in 0..3 {
                for kx in 0..3 {
                    let k = kd[kbase + ky * 3 + kx];
                    let (y0, y1) = valid_range(ky, h);
                    let (x0, x1) = valid_range(kx, w);
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let sy = y + ky - 1;
                        let grow = &g[y * w + x0..y * w + x1];
                        let off = sy * w + x0 + kx - 1;
                        let xrow = &xp[off..off + (x1 - x0)];
                        let gxrow = &mut gxp[off..off + (x1 - x0)];
                        for ((&gv, &xv), gxv) in grow.iter().zip(xrow).zip(gxrow.iter_mut()) {
                            acc += gv * xv;
                            *gxv += k * gv;
                        }
                    }
                    gk[kbase + ky * 3 + kx] += acc;
                }
            }
        }
    }
    Ok((
        Tensor::new(x.shape(), gx)?,
        Tensor::new(kernel.shape(), gk)?,
        Tensor::new(&[cout], gb)?,
    ))
}

/// Sub-pixel rearrangement `[C·r² × H × W] → [C × rH × rW]`.
///
/// Channel `c·r² + i·r + j` at `(y, x)` lands at `(y·r + i, x·r + j)` of
/// output channel `c`.
pub fn pixel_shuffle(x: &Tensor, r: usize) -> Result<Tensor> {
    let (cr2, h, w) = x.dims3()?;
    if r == 0 || cr2 % (r * r) != 0 {
        return Err(Error::dim(format!(
            "pixel_shuffle: {cr2} channels not divisible by r² = {}",
            r * r
        )));
    }
    let c = cr2 / (r * r);
    let (oh, ow) = (h * r, w * r);
    let mut out = vec![0.0; c * oh * ow];
    for (src, &v) in x.data().iter().enumerate() {
        out[shuffle_index(src, r, h, w)] = v;
    }
    Tensor::new(&[c, oh, ow], out)
}

/// Inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle(x: &Tensor, r: usize) -> Result<Tensor> {
    let (c, oh, ow) = x.dims3()?;
    if r == 0 || oh % r != 0 || ow % r != 0 {
        return Err(Error::dim(format!(
            "pixel_unshuffle: {oh}x{ow} not divisible by {r}"
        )));
    }
    let (h, w) = (oh / r, ow / r);
    let mut out = vec![0.0; c * r * r * h * w];
    for (src, o) in out.iter_mut().enumerate() {
        *o = x.data()[shuffle_index(src, r, h, w)];
    }
    Tensor::new(&[c * r * r, h, w], out)
}

fn shuffle_index(src: usize, r: usize, h: usize, w: usize) -> usize {
    let xw = src % w;
    let y = (src / w) % h;
    let ch = src / (w * h);
    let (c, sub) = (ch / (r * r), ch % (r * r));
    let (i, j) = (sub / r, sub % r);
    (c * h * r + y * r + i) * (w * r) + xw * r + j
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)
const GELU_C: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_K * (x + GELU_C * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let u = GELU_K * (x + GELU_C * x * x * x);
    let t = u.tanh();
    let du = GELU_K * (1.0 + 3.0 * GELU_C * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Two-layer perceptron on `[tokens × features]` rows: `gelu(x·w1 + b1)·w2 + b2`.
pub fn mlp(x: &Tensor, w1: &Tensor, b1: &Tensor, w2: &Tensor, b2: &Tensor) -> Result<Tensor> {
    let h = add_row_bias(&x.matmul(w1)?, b1)?.map(gelu);
    add_row_bias(&h.matmul(w2)?, b2)
}

/// Adds a `[cols]` vector to every row of a `[rows × cols]` matrix.
pub fn add_row_bias(x: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (r, c) = x.dims2()?;
    check_feature_vec(b, c)?;
    let mut out = x.data().to_vec();
    for row in out.chunks_mut(c) {
        for (v, bv) in row.iter_mut().zip(b.data()) {
            *v += bv;
        }
    }
    Tensor::new(&[r, c], out)
}
