//! Seeded piecewise-smooth phantoms: a body ellipse with a tissue gradient,
//! several organ-like ellipses and a few small bright lesions.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

pub const DEFAULT_SIDE: usize = 64;

#[derive(Clone, Copy, Debug)]
struct Ellipse {
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
    angle: f64,
    value: f64,
}

impl Ellipse {
    fn contains(&self, y: f64, x: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let dy = y - self.cy;
        let dx = x - self.cx;
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        (u / self.rx).powi(2) + (v / self.ry).powi(2) <= 1.0
    }
}

/// Seed of the `index`-th image drawn from `base_seed`.
pub fn image_seed(base_seed: u64, index: usize) -> u64 {
    // splitmix64 finaliser
    let mut z = base_seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A `[1 × side × side]` phantom with values in `[0, 1]`.
pub fn phantom(side: usize, seed: u64) -> Result<Tensor> {
    if side < 8 {
        return Err(Error::usage(format!(
            "phantom side must be >= 8, got {side}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let body = Ellipse {
        cy: rng.random_range(-0.05..0.05),
        cx: rng.random_range(-0.05..0.05),
        ry: rng.random_range(0.75..0.9),
        rx: rng.random_range(0.6..0.85),
        angle: rng.random_range(-0.3..0.3),
        value: rng.random_range(0.25..0.4),
    };
    let grad_y = rng.random_range(-0.1..0.1);
    let grad_x = rng.random_range(-0.1..0.1);

    let mut organs = Vec::new();
    for _ in 0..rng.random_range(3..6) {
        organs.push(Ellipse {
            cy: rng.random_range(-0.45..0.45),
            cx: rng.random_range(-0.4..0.4),
            ry: rng.random_range(0.1..0.3),
            rx: rng.random_range(0.08..0.25),
            angle: rng.random_range(0.0..std::f64::consts::PI),
            value: rng.random_range(-0.15..0.3),
        });
    }
    let mut lesions = Vec::new();
    for _ in 0..rng.random_range(1..4) {
        let r = rng.random_range(0.04..0.1);
        lesions.push(Ellipse {
            cy: rng.random_range(-0.5..0.5),
            cx: rng.random_range(-0.45..0.45),
            ry: r,
            rx: r * rng.random_range(0.7..1.3),
            angle: 0.0,
            value: rng.random_range(0.85..1.0),
        });
    }

    let mut data = Vec::with_capacity(side * side);
    for i in 0..side {
        for j in 0..side {
            let y = 2.0 * (i as f64 + 0.5) / side as f64 - 1.0;
            let x = 2.0 * (j as f64 + 0.5) / side as f64 - 1.0;
            let mut v = 0.0;
            if body.contains(y, x) {
                v = body.value + grad_y * y + grad_x * x;
                for o in &organs {
                    if o.contains(y, x) {
                        v += o.value;
                    }
                }
                // lesions replace rather than add
                for l in &lesions {
                    if l.contains(y, x) {
                        v = l.value;
                    }
                }
            }
            data.push(v.clamp(0.0, 1.0));
        }
    }
    Tensor::new(&[1, side, side], data)
}
