//! Reliability prior from repeated stochastic segmentation.
//!
//! A segmenter with dropout active at inference time is run `T` times with
//! different seeds. The resulting soft masks are fused pairwise:
//!
//! * consistency `C = max_{i<j} min(S_i, S_j)`
//! * discrepancy `D = max_{i<j} |S_i − S_j|`
//! * reliability `U = α·C + β·D`
//!
//! For binary masks the max/min pair realises set union/intersection.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::container::Container;
use crate::error::{Error, Result};
use crate::numerics::nn::{conv2d, sigmoid};
use crate::numerics::tensor::Tensor;

pub const DEFAULT_SAMPLES: usize = 4;
pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_BETA: f64 = 0.5;
pub const DEFAULT_DROPOUT: f64 = 0.1;
pub const DEFAULT_SEGMENTER_CHANNELS: usize = 8;

/// A segmentation model whose output depends on a sampling seed.
pub trait StochasticSegmenter: Sync {
    /// One stochastic pass. Identical `(image, seed)` pairs must give
    /// identical masks.
    fn segment(&self, image: &Tensor, seed: u64) -> Result<SegmentationSample>;

    fn dropout_rate(&self) -> f64;
}

/// One soft mask with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentationSample {
    mask: Tensor,
}

impl SegmentationSample {
    pub fn new(mask: Tensor) -> Result<Self> {
        if let Some(v) = mask.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::usage(format!("mask value {v} outside [0, 1]")));
        }
        Ok(Self { mask })
    }

    pub fn mask(&self) -> &Tensor {
        &self.mask
    }

    pub fn into_mask(self) -> Tensor {
        self.mask
    }
}

/// Fused consistency, discrepancy and reliability maps.
#[derive(Clone, Debug, PartialEq)]
pub struct ReliablePrior {
    pub consistency: Tensor,
    pub discrepancy: Tensor,
    pub reliability: Tensor,
    pub alpha: f64,
    pub beta: f64,
    pub samples: usize,
}

/// Seed of the `t`-th pass.
pub fn pass_seed(base_seed: u64, t: usize) -> u64 {
    base_seed.wrapping_add(t as u64)
}

/// Monte-Carlo estimate of the predictive mean, `(1/T) Σ_t S_t`.
pub fn mc_mean<S: StochasticSegmenter + ?Sized>(
    segmenter: &S,
    image: &Tensor,
    samples: usize,
    base_seed: u64,
) -> Result<Tensor> {
    if samples < 1 {
        return Err(Error::usage("mc_mean needs at least one sample"));
    }
    let mut acc = segmenter
        .segment(image, pass_seed(base_seed, 0))?
        .into_mask();
    for t in 1..samples {
        acc.add_assign(segmenter.segment(image, pass_seed(base_seed, t))?.mask())?;
    }
    Ok(acc.scale(1.0 / samples as f64))
}

/// Pairwise fusion of `T ≥ 2` masks into a [`ReliablePrior`].
pub fn fuse(samples: &[SegmentationSample], alpha: f64, beta: f64) -> Result<ReliablePrior> {
    if samples.len() < 2 {
        return Err(Error::usage(format!(
            "fuse needs at least two samples, got {}",
            samples.len()
        )));
    }
    if !(alpha >= 0.0 && beta >= 0.0) {
        return Err(Error::usage(format!(
            "fusion weights must be non-negative, got alpha={alpha}, beta={beta}"
        )));
    }
    let shape = samples[0].mask.shape().to_vec();
    for s in samples {
        if s.mask.shape() != shape.as_slice() {
            return Err(Error::dim("all masks must share a shape"));
        }
    }
    let n = samples[0].mask.len();
    let mut c = vec![f64::NEG_INFINITY; n];
    let mut d = vec![f64::NEG_INFINITY; n];
    for (i, si) in samples.iter().enumerate() {
        for sj in &samples[i + 1..] {
            let (a, b) = (si.mask.data(), sj.mask.data());
            for p in 0..n {
                c[p] = c[p].max(a[p].min(b[p]));
                d[p] = d[p].max((a[p] - b[p]).abs());
            }
        }
    }
    let u: Vec<f64> = c
        .iter()
        .zip(&d)
        .map(|(&cv, &dv)| alpha * cv + beta * dv)
        .collect();
    Ok(ReliablePrior {
        consistency: Tensor::new(&shape, c)?,
        discrepancy: Tensor::new(&shape, d)?,
        reliability: Tensor::new(&shape, u)?,
        alpha,
        beta,
        samples: samples.len(),
    })
}

/// Runs `T` seeded passes and fuses them.
pub fn produce_prior<S: StochasticSegmenter + ?Sized>(
    segmenter: &S,
    image: &Tensor,
    samples: usize,
    alpha: f64,
    beta: f64,
    base_seed: u64,
) -> Result<ReliablePrior> {
    if samples < 2 {
        return Err(Error::usage(format!(
            "a reliability prior needs at least two passes, got {samples}"
        )));
    }
    let masks = (0..samples)
        .map(|t| segmenter.segment(image, pass_seed(base_seed, t)))
        .collect::<Result<Vec<_>>>()?;
    fuse(&masks, alpha, beta)
}

/// Small fixed-weight scorer with MC dropout.
///
/// A pass applies dropout to the input pixels, smooths with a 3×3 box
/// filter, thresholds the result against `channels` evenly spaced levels
/// (ReLU units), applies dropout to those units, averages them and squashes
/// with a sigmoid. Bright structures therefore score high.
#[derive(Clone, Debug)]
pub struct ToySegmenter {
    channels: usize,
    dropout_rate: f64,
    box_kernel: Tensor,
}

const SCORE_GAIN: f64 = 20.0;
const SCORE_OFFSET: f64 = 0.08;

pub fn toy_segmenter(channels: usize, dropout_rate: f64) -> Result<ToySegmenter> {
    if channels == 0 {
        return Err(Error::usage("segmenter needs at least one channel"));
    }
    if !(0.0..1.0).contains(&dropout_rate) {
        return Err(Error::usage(format!(
            "dropout rate must lie in [0, 1), got {dropout_rate}"
        )));
    }
    Ok(ToySegmenter {
        channels,
        dropout_rate,
        box_kernel: Tensor::full(&[1, 1, 3, 3], 1.0 / 9.0),
    })
}

impl ToySegmenter {
    pub fn channels(&self) -> usize {
        self.channels
    }

    fn dropout(&self, rng: &mut ChaCha8Rng, v: f64) -> f64 {
        if self.dropout_rate == 0.0 {
            return v;
        }
        if rng.random::<f64>() < self.dropout_rate {
            0.0
        } else {
            v / (1.0 - self.dropout_rate)
        }
    }
}

impl StochasticSegmenter for ToySegmenter {
    fn segment(&self, image: &Tensor, seed: u64) -> Result<SegmentationSample> {
        let (h, w) = match image.shape() {
            &[h, w] | &[1, h, w] => (h, w),
            s => {
                return Err(Error::dim(format!(
                    "segmenter expects a single-channel image, got {s:?}"
                )))
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dropped: Vec<f64> = image
            .data()
            .iter()
            .map(|&v| self.dropout(&mut rng, v))
            .collect();
        let smooth = conv2d(&Tensor::new(&[1, h, w], dropped)?, &self.box_kernel, None)?;
        let inv = 1.0 / self.channels as f64;
        let mut out = Vec::with_capacity(h * w);
        for &s in smooth.data() {
            let mut agg = 0.0;
            for c in 0..self.channels {
                let level = (c as f64 + 0.5) * inv;
                agg += self.dropout(&mut rng, (s - level).max(0.0));
            }
            out.push(sigmoid(SCORE_GAIN * (agg * inv - SCORE_OFFSET)));
        }
        SegmentationSample::new(Tensor::new(image.shape(), out)?)
    }

    fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }
}

/// On-disk prior cache entry.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorRecord {
    pub id: String,
    pub samples: usize,
    pub alpha: f64,
    pub beta: f64,
    pub reliability: Tensor,
}

impl PriorRecord {
    pub fn from_prior(id: impl Into<String>, prior: &ReliablePrior) -> Self {
        Self {
            id: id.into(),
            samples: prior.samples,
            alpha: prior.alpha,
            beta: prior.beta,
            reliability: prior.reliability.clone(),
        }
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new()
            .with_meta("kind", "prior")
            .with_meta("id", &self.id)
            .with_meta("samples", self.samples)
            .with_meta("alpha", self.alpha)
            .with_meta("beta", self.beta);
        c.push("reliability", self.reliability.clone());
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let reliability = c
            .tensor("reliability")
            .ok_or_else(|| Error::Format("prior record lacks 'reliability'".into()))?
            .clone();
        Ok(Self {
            id: c.meta_parse("id")?,
            samples: c.meta_parse("samples")?,
            alpha: c.meta_parse("alpha")?,
            beta: c.meta_parse("beta")?,
            reliability,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.to_container().write(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_container(&Container::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(v: &[f64]) -> SegmentationSample {
        SegmentationSample::new(Tensor::new(&[1, v.len()], v.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn single_disagreeing_pixel() {
        let p = fuse(&[sample(&[1.0, 0.0]), sample(&[1.0, 1.0])], 0.5, 0.5).unwrap();
        assert_eq!(p.consistency.data(), &[1.0, 0.0]);
        assert_eq!(p.discrepancy.data(), &[0.0, 1.0]);
        assert_eq!(p.reliability.data(), &[0.5, 0.5]);
    }

    #[test]
    fn identical_masks_have_no_discrepancy() {
        let m = sample(&[1.0, 0.0, 1.0, 1.0]);
        let p = fuse(&[m.clone(), m.clone(), m.clone()], 0.5, 0.5).unwrap();
        assert_eq!(&p.consistency, m.mask());
        assert!(p.discrepancy.data().iter().all(|&v| v == 0.0));
        assert_eq!(p.reliability, m.mask().scale(0.5));
    }

    #[test]
    fn fuse_argument_errors() {
        let m = sample(&[0.5]);
        assert!(matches!(
            fuse(std::slice::from_ref(&m), 0.5, 0.5),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            fuse(&[m.clone(), m.clone()], -0.1, 0.5),
            Err(Error::Usage(_))
        ));
        assert!(fuse(&[m.clone(), sample(&[0.5, 0.5])], 0.5, 0.5).is_err());
        assert!(SegmentationSample::new(Tensor::scalar(1.5)).is_err());
    }

    #[test]
    fn toy_segmenter_validation() {
        assert!(toy_segmenter(4, 1.0).is_err());
        assert!(toy_segmenter(4, -0.1).is_err());
        assert!(toy_segmenter(0, 0.1).is_err());
        assert!(toy_segmenter(4, 0.0).is_ok());
    }

    #[test]
    fn zero_dropout_is_seed_independent() {
        let seg = toy_segmenter(4, 0.0).unwrap();
        let img = Tensor::from_fn(&[1, 8, 8], |i| (i % 7) as f64 / 7.0);
        let a = seg.segment(&img, 1).unwrap();
        let b = seg.segment(&img, 99).unwrap();
        assert_eq!(a, b);
        assert!(a.mask().data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn mc_mean_requires_a_sample() {
        let seg = toy_segmenter(4, 0.1).unwrap();
        assert!(mc_mean(&seg, &Tensor::ones(&[4, 4]), 0, 0).is_err());
    }

    #[test]
    fn record_roundtrip() {
        let seg = toy_segmenter(4, 0.2).unwrap();
        let img = Tensor::from_fn(&[1, 4, 4], |i| i as f64 / 16.0);
        let p = produce_prior(&seg, &img, 4, 0.5, 0.5, 3).unwrap();
        let rec = PriorRecord::from_prior("img7", &p);
        assert_eq!(
            PriorRecord::from_container(&rec.to_container()).unwrap(),
            rec
        );
    }
}
