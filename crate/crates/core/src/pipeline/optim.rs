//! Adam and cosine annealing with warm restarts.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

pub const DEFAULT_LR_INITIAL: f64 = 2e-4;
pub const DEFAULT_LR_FINAL: f64 = 1e-6;
pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.99;
pub const DEFAULT_ADAM_EPS: f64 = 1e-8;
pub const DEFAULT_BATCH: usize = 4;
pub const DEFAULT_STEPS: usize = 2000;
pub const DEFAULT_PATCH: usize = 16;
/// Full-scale training patch. 96×96 crops give 9216 tokens, which the
/// radix-2 transform cannot take; 128×128 is the nearest power-of-two plane.
pub const FULL_SCALE_PATCH: usize = 128;
/// Phantom side used with [`FULL_SCALE_PATCH`] (two tiles per axis).
pub const FULL_SCALE_SIDE: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr_initial: f64,
    pub lr_final: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch: usize,
    pub steps: usize,
    pub patch: usize,
    /// Steps per cosine cycle; `None` means a single cycle over `steps`.
    pub restart_period: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_initial: DEFAULT_LR_INITIAL,
            lr_final: DEFAULT_LR_FINAL,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            eps: DEFAULT_ADAM_EPS,
            batch: DEFAULT_BATCH,
            steps: DEFAULT_STEPS,
            patch: DEFAULT_PATCH,
            restart_period: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_final > 0.0 && self.lr_final <= self.lr_initial && self.lr_initial.is_finite())
        {
            return Err(Error::usage(format!(
                "learning rates need 0 < lr_final <= lr_initial, got {} and {}",
                self.lr_final, self.lr_initial
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::usage(format!("{name} must lie in (0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::usage("Adam epsilon must be positive"));
        }
        if self.batch == 0 || self.steps == 0 {
            return Err(Error::usage("batch and steps must be >= 1"));
        }
        if self.patch < 2 || !self.patch.is_power_of_two() {
            return Err(Error::usage(format!(
                "patch must be a power of two >= 2, got {}",
                self.patch
            )));
        }
        if self.restart_period == Some(0) {
            return Err(Error::usage("restart period must be >= 1"));
        }
        Ok(())
    }

    pub fn schedule(&self) -> CosineRestarts {
        CosineRestarts {
            lr_initial: self.lr_initial,
            lr_final: self.lr_final,
            period: self.restart_period.unwrap_or(self.steps),
        }
    }
}

/// `lr(s) = lr_f + ½(lr_i − lr_f)(1 + cos(π · (s mod P) / P))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CosineRestarts {
    pub lr_initial: f64,
    pub lr_final: f64,
    pub period: usize,
}

impl CosineRestarts {
    pub fn lr(&self, step: usize) -> f64 {
        let phase = (step % self.period) as f64 / self.period as f64;
        let lr =
            self.lr_final + 0.5 * (self.lr_initial - self.lr_final) * (1.0 + (PI * phase).cos());
        lr.clamp(self.lr_final, self.lr_initial)
    }
}

/// Adam with bias-corrected moments over a flat list of tensors.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor], lr: f64) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::dim(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| Tensor::zeros(g.shape())).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(Error::dim("parameter list changed between Adam steps"));
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powf(self.t as f64);
        let c2 = 1.0 - self.beta2.powf(self.t as f64);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            p.expect_same_shape(g)?;
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                *pv -= lr * (*mv / c1) / ((*vv / c2).sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
