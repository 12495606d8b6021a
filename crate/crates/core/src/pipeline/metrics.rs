//! Full-reference image quality metrics.

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

pub const SSIM_WINDOW: usize = 8;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn plane(t: &Tensor) -> Result<(usize, usize)> {
    match t.shape() {
        &[1, h, w] | &[h, w] => Ok((h, w)),
        s => Err(Error::dim(format!(
            "expected a single-channel image, got {s:?}"
        ))),
    }
}

pub fn mse(pred: &Tensor, target: &Tensor) -> Result<f64> {
    pred.expect_same_shape(target)?;
    let sq: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sq / pred.len() as f64)
}

/// Peak signal-to-noise ratio in dB. Identical inputs give
/// `f64::INFINITY`.
pub fn psnr(pred: &Tensor, target: &Tensor, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::usage(format!("peak must be positive, got {peak}")));
    }
    let m = mse(pred, target)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / m).log10())
}

/// Mean SSIM over all `8 × 8` windows at stride 1, dynamic range 1.
pub fn ssim(pred: &Tensor, target: &Tensor) -> Result<f64> {
    pred.expect_same_shape(target)?;
    let (h, w) = plane(pred)?;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::dim(format!(
            "SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let (x, y) = (pred.data(), target.data());
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for i0 in 0..=h - SSIM_WINDOW {
        for j0 in 0..=w - SSIM_WINDOW {
            let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in i0..i0 + SSIM_WINDOW {
                for j in j0..j0 + SSIM_WINDOW {
                    let (a, b) = (x[i * w + j], y[i * w + j]);
                    sx += a;
                    sy += b;
                    sxx += a * a;
                    syy += b * b;
                    sxy += a * b;
                }
            }
            let (mx, my) = (sx / n, sy / n);
            let vx = sxx / n - mx * mx;
            let vy = syy / n - my * my;
            let cov = sxy / n - mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}
