//! Patch-based L1 training.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{forward_var, l1_loss_var, ModelConfig, ModelParams};
use crate::numerics::autodiff::Graph;
use crate::numerics::tensor::Tensor;
use crate::pipeline::dataset::{Dataset, Sample, Split};
use crate::pipeline::optim::{Adam, TrainConfig};

pub const CURVE_HEADER: &str = "step,lr,loss";
/// XOR-ed into the training seed to seed parameter initialisation.
pub const INIT_SALT: u64 = 0x1417_0000_0000_0001;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub step: usize,
    pub lr: f64,
    /// Mean batch loss before the update of this step.
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub curve: Vec<CurvePoint>,
}

/// One training example: degraded patch, prior patch, clean target patch.
#[derive(Clone, Debug)]
pub struct Patch {
    pub lq: Tensor,
    pub prior: Tensor,
    pub target: Tensor,
}

pub(crate) fn crop(img: &Tensor, y: usize, x: usize, side: usize) -> Result<Tensor> {
    let (_, h, w) = img.dims3()?;
    if y + side > h || x + side > w {
        return Err(Error::dim(format!(
            "crop {side}x{side} at ({y},{x}) exceeds {h}x{w}"
        )));
    }
    let d = img.data();
    let mut out = Vec::with_capacity(side * side);
    for i in y..y + side {
        out.extend_from_slice(&d[i * w + x..i * w + x + side]);
    }
    Tensor::new(&[1, side, side], out)
}

pub(crate) fn prior_of(s: &Sample) -> Result<&Tensor> {
    s.prior
        .as_ref()
        .ok_or_else(|| Error::MissingInput(format!("no prior for image '{}'", s.id)))
}

pub fn sample_patch<R: Rng + ?Sized>(
    pool: &[&Sample],
    patch: usize,
    upscale: usize,
    rng: &mut R,
) -> Result<Patch> {
    let s = pool[rng.random_range(0..pool.len())];
    let (_, h, w) = s.degraded.dims3()?;
    if patch > h || patch > w {
        return Err(Error::usage(format!(
            "patch {patch} exceeds image {h}x{w} of '{}'",
            s.id
        )));
    }
    let y = rng.random_range(0..=h - patch);
    let x = rng.random_range(0..=w - patch);
    Ok(Patch {
        lq: crop(&s.degraded, y, x, patch)?,
        prior: crop(prior_of(s)?, y, x, patch)?,
        target: crop(&s.clean, y * upscale, x * upscale, patch * upscale)?,
    })
}

/// Loss and per-leaf gradients (visiting order) for one patch.
pub fn loss_and_grads(
    params: &ModelParams,
    config: &ModelConfig,
    patch: &Patch,
) -> Result<(f64, Vec<Tensor>)> {
    let g = Graph::new();
    let p = params.bind(&g);
    let prior = config
        .variant
        .uses_prior()
        .then(|| g.constant(patch.prior.clone()));
    let out = forward_var(g.constant(patch.lq.clone()), prior, &p, config)?;
    let loss = l1_loss_var(out, g.constant(patch.target.clone()))?;
    let grads = g.backward(loss)?;
    let mut flat = Vec::new();
    p.visit(&mut |_, v| flat.push(grads.wrt(*v)));
    let value = loss.value().item()?;
    Ok((value, flat))
}

fn check_inputs<'d>(config: &ModelConfig, data: &'d Dataset) -> Result<Vec<&'d Sample>> {
    config.validate()?;
    if data.degradation.task() != config.task {
        return Err(Error::usage(format!(
            "dataset degradation '{}' calls for task '{}', model is configured for '{}'",
            data.degradation,
            data.degradation.task(),
            config.task
        )));
    }
    let pool: Vec<&Sample> = data.split(Split::Train).collect();
    if pool.is_empty() {
        return Err(Error::MissingInput("dataset has no training images".into()));
    }
    for s in &pool {
        prior_of(s)?;
    }
    Ok(pool)
}

/// Trains from a seeded initialisation.
pub fn train(config: &ModelConfig, cfg: &TrainConfig, data: &Dataset) -> Result<TrainOutcome> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ INIT_SALT);
    let params = ModelParams::init(config, &mut rng)?;
    train_from(params, config, cfg, data)
}

/// Trains `params` in place. Batch items are evaluated in parallel and
/// their gradients are reduced in batch order, so results do not depend on
/// the thread count.
pub fn train_from(
    mut params: ModelParams,
    config: &ModelConfig,
    cfg: &TrainConfig,
    data: &Dataset,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let pool = check_inputs(config, data)?;
    let schedule = cfg.schedule();
    let mut adam = Adam::new(cfg.beta1, cfg.beta2, cfg.eps);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut curve = Vec::with_capacity(cfg.steps);
    let upscale = config.task.upscale();

    for step in 0..cfg.steps {
        let patches = (0..cfg.batch)
            .map(|_| sample_patch(&pool, cfg.patch, upscale, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let results = patches
            .par_iter()
            .map(|p| loss_and_grads(&params, config, p))
            .collect::<Result<Vec<_>>>()?;
        let inv = 1.0 / cfg.batch as f64;
        let mut loss = 0.0;
        let mut grads: Vec<Tensor> = Vec::new();
        for (l, g) in results {
            loss += l * inv;
            if grads.is_empty() {
                grads = g.into_iter().map(|t| t.scale(inv)).collect();
            } else {
                for (acc, t) in grads.iter_mut().zip(g) {
                    acc.add_assign(&t.scale(inv))?;
                }
            }
        }
        if !loss.is_finite() || grads.iter().any(|t| !t.all_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite loss or gradient at step {step}"
            )));
        }
        let lr = schedule.lr(step);
        adam.step(&mut params.flatten_mut(), &grads, lr)?;
        curve.push(CurvePoint { step, lr, loss });
    }
    Ok(TrainOutcome { params, curve })
}

pub fn curve_csv(curve: &[CurvePoint]) -> String {
    let mut s = format!("{CURVE_HEADER}\n");
    for p in curve {
        let _ = writeln!(s, "{},{:e},{:e}", p.step, p.lr, p.loss);
    }
    s
}

pub fn write_curve(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, curve_csv(curve))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_reads_window() {
        let img = Tensor::from_fn(&[1, 4, 4], |i| i as f64);
        assert_eq!(crop(&img, 1, 2, 2).unwrap().data(), &[6.0, 7.0, 10.0, 11.0]);
        assert!(crop(&img, 3, 3, 2).is_err());
    }
}
