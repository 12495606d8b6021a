//! Synthetic degradations: dose-dependent noise, bicubic downsampling and
//! two acquisition artifacts.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::Task;
use crate::numerics::tensor::Tensor;

/// Noise variance per unit intensity at dose fraction 1/2.
pub const NOISE_GAIN: f64 = 0.004;
pub const DEFAULT_DOSE: f64 = 0.25;
/// Cubic convolution parameter.
pub const BICUBIC_A: f64 = -0.5;
pub const MASK_BLOCK: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArtifactKind {
    BiasField,
    BlockMasking,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Degradation {
    /// Signal-dependent Gaussian noise, variance
    /// `NOISE_GAIN · max(x, 0) · (1/dose − 1)`.
    Noise {
        dose: f64,
    },
    BicubicDown {
        factor: usize,
    },
    Artifact {
        kind: ArtifactKind,
        strength: f64,
    },
}

impl Degradation {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Degradation::Noise { dose } if !(dose > 0.0 && dose <= 1.0) => Err(Error::usage(
                format!("dose fraction must lie in (0, 1], got {dose}"),
            )),
            Degradation::BicubicDown { factor } if factor != 2 && factor != 4 => Err(Error::usage(
                format!("downsampling factor must be 2 or 4, got {factor}"),
            )),
            Degradation::Artifact { strength, .. }
                if !(strength >= 0.0 && strength.is_finite()) =>
            {
                Err(Error::usage(format!(
                    "artifact strength must be >= 0, got {strength}"
                )))
            }
            Degradation::Artifact {
                kind: ArtifactKind::BlockMasking,
                strength,
            } if strength > 1.0 => Err(Error::usage(format!(
                "block masking fraction must be <= 1, got {strength}"
            ))),
            _ => Ok(()),
        }
    }

    /// Restoration task that inverts this degradation.
    pub fn task(&self) -> Task {
        match *self {
            Degradation::Noise { .. } => Task::Denoise,
            Degradation::BicubicDown { factor } => Task::SuperResolve(factor),
            Degradation::Artifact { .. } => Task::ArtifactRemoval,
        }
    }
}

impl fmt::Display for Degradation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Degradation::Noise { dose } => write!(f, "noise-d{dose}"),
            Degradation::BicubicDown { factor } => write!(f, "bicubic-x{factor}"),
            Degradation::Artifact {
                kind: ArtifactKind::BiasField,
                strength,
            } => write!(f, "bias-s{strength}"),
            Degradation::Artifact {
                kind: ArtifactKind::BlockMasking,
                strength,
            } => write!(f, "block-s{strength}"),
        }
    }
}

impl FromStr for Degradation {
    type Err = Error;

    /// Parses the identifiers produced by `Display`, e.g. `noise-d0.25`,
    /// `bicubic-x2`, `bias-s0.3`, `block-s0.1`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::usage(format!("unrecognised degradation '{s}'"));
        let num = |rest: &str| rest.parse::<f64>().map_err(|_| bad());
        let d = if let Some(rest) = s.strip_prefix("noise-d") {
            Degradation::Noise { dose: num(rest)? }
        } else if let Some(rest) = s.strip_prefix("bicubic-x") {
            Degradation::BicubicDown {
                factor: rest.parse().map_err(|_| bad())?,
            }
        } else if let Some(rest) = s.strip_prefix("bias-s") {
            Degradation::Artifact {
                kind: ArtifactKind::BiasField,
                strength: num(rest)?,
            }
        } else if let Some(rest) = s.strip_prefix("block-s") {
            Degradation::Artifact {
                kind: ArtifactKind::BlockMasking,
                strength: num(rest)?,
            }
        } else {
            return Err(bad());
        };
        d.validate()?;
        Ok(d)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DegradationSpec {
    pub kind: Degradation,
    pub seed: u64,
}

impl DegradationSpec {
    pub fn new(kind: Degradation, seed: u64) -> Result<Self> {
        kind.validate()?;
        Ok(Self { kind, seed })
    }

    /// Directory-safe identifier of the degradation (seed excluded).
    pub fn spec_id(&self) -> String {
        self.kind.to_string()
    }
}

/// Analytic per-pixel variance of the noise surrogate.
pub fn noise_variance(x: f64, dose: f64) -> f64 {
    NOISE_GAIN * x.max(0.0) * (1.0 / dose - 1.0)
}

/// Applies `spec` to a `[1 × H × W]` image with values in `[0, 1]`.
pub fn degrade(clean: &Tensor, spec: &DegradationSpec) -> Result<Tensor> {
    spec.kind.validate()?;
    let (c, h, w) = clean.dims3()?;
    if c != 1 {
        return Err(Error::dim(format!(
            "expected a single-channel image, got {c} channels"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.kind {
        Degradation::Noise { dose } => Ok(clean.map(|x| {
            let z: f64 = rng.sample(StandardNormal);
            x + noise_variance(x, dose).sqrt() * z
        })),
        Degradation::BicubicDown { factor } => {
            if h % factor != 0 || w % factor != 0 {
                return Err(Error::dim(format!("{h}x{w} is not divisible by {factor}")));
            }
            bicubic_resize(clean, h / factor, w / factor)
        }
        Degradation::Artifact {
            kind: ArtifactKind::BiasField,
            strength,
        } => {
            let coef: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let poly = |y: f64, x: f64| {
                coef[0] * y
                    + coef[1] * x
                    + coef[2] * y * y
                    + coef[3] * x * x
                    + coef[4] * x * y
                    + coef[5]
            };
            let coord = |i: usize, n: usize| 2.0 * (i as f64 + 0.5) / n as f64 - 1.0;
            let mut peak = 0.0f64;
            for i in 0..h {
                for j in 0..w {
                    peak = peak.max(poly(coord(i, h), coord(j, w)).abs());
                }
            }
            let norm = if peak > 0.0 { 1.0 / peak } else { 0.0 };
            let mut out = clean.clone();
            for (idx, v) in out.data_mut().iter_mut().enumerate() {
                let p = poly(coord(idx / w, h), coord(idx % w, w)) * norm;
                *v *= (1.0 + strength * p).max(0.0);
            }
            Ok(out)
        }
        Degradation::Artifact {
            kind: ArtifactKind::BlockMasking,
            strength,
        } => {
            let by = h.div_ceil(MASK_BLOCK);
            let bx = w.div_ceil(MASK_BLOCK);
            let masked: Vec<bool> = (0..by * bx)
                .map(|_| rng.random::<f64>() < strength)
                .collect();
            let mut out = clean.clone();
            for (idx, v) in out.data_mut().iter_mut().enumerate() {
                let (i, j) = (idx / w, idx % w);
                if masked[(i / MASK_BLOCK) * bx + j / MASK_BLOCK] {
                    *v = 0.0;
                }
            }
            Ok(out)
        }
    }
}

/// Cubic convolution kernel with parameter [`BICUBIC_A`].
pub fn cubic(x: f64) -> f64 {
    let a = BICUBIC_A;
    let t = x.abs();
    if t <= 1.0 {
        ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a
    } else {
        0.0
    }
}

/// Taps `(index, weight)` for each output sample along one axis. When
/// shrinking, the kernel is stretched by the inverse scale (antialiasing).
/// Weights are normalised to sum to one; borders replicate.
fn axis_taps(n_in: usize, n_out: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = n_out as f64 / n_in as f64;
    let stretch = if scale < 1.0 { scale } else { 1.0 };
    let support = 2.0 / stretch;
    (0..n_out)
        .map(|o| {
            let center = (o as f64 + 0.5) / scale - 0.5;
            let lo = (center - support).floor() as i64;
            let hi = (center + support).ceil() as i64;
            let mut taps: Vec<(usize, f64)> = (lo..=hi)
                .map(|i| {
                    let wgt = stretch * cubic(stretch * (center - i as f64));
                    (i.clamp(0, n_in as i64 - 1) as usize, wgt)
                })
                .filter(|&(_, wgt)| wgt != 0.0)
                .collect();
            let total: f64 = taps.iter().map(|t| t.1).sum();
            for t in &mut taps {
                t.1 /= total;
            }
            taps
        })
        .collect()
}

/// Separable bicubic resampling of a `[1 × H × W]` image.
pub fn bicubic_resize(img: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (c, h, w) = img.dims3()?;
    if c != 1 || out_h == 0 || out_w == 0 {
        return Err(Error::dim(
            "bicubic resize expects [1 x H x W] and a non-empty target",
        ));
    }
    let rows = axis_taps(h, out_h);
    let cols = axis_taps(w, out_w);
    let src = img.data();
    let mut tmp = vec![0.0; out_h * w];
    for (o, taps) in rows.iter().enumerate() {
        for &(i, wgt) in taps {
            for j in 0..w {
                tmp[o * w + j] += wgt * src[i * w + j];
            }
        }
    }
    let mut out = vec![0.0; out_h * out_w];
    for y in 0..out_h {
        for (o, taps) in cols.iter().enumerate() {
            out[y * out_w + o] = taps.iter().map(|&(j, wgt)| wgt * tmp[y * w + j]).sum();
        }
    }
    Tensor::new(&[1, out_h, out_w], out)
}
