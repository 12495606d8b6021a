//! Central finite-difference oracle for checking reverse-mode gradients.
//!
//! The oracle only ever evaluates the forward function, so it is
//! independent of every backward rule it is used to check.

use rand::seq::index::sample;
use rand::Rng;

use crate::numerics::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Gradients smaller than this are compared absolutely rather than
/// relatively.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// Coordinate of one scalar parameter: `(tensor index, flat element index)`.
pub type Coord = (usize, usize);

/// `(f(x + h e_i) − f(x − h e_i)) / 2h` for each requested coordinate.
pub fn central_differences<F>(f: F, inputs: &[Tensor], coords: &[Coord], step: f64) -> Vec<f64>
where
    F: Fn(&[Tensor]) -> f64,
{
    let mut work = inputs.to_vec();
    coords
        .iter()
        .map(|&(t, i)| {
            let orig = work[t].data()[i];
            work[t].data_mut()[i] = orig + step;
            let plus = f(&work);
            work[t].data_mut()[i] = orig - step;
            let minus = f(&work);
            work[t].data_mut()[i] = orig;
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

/// `|a − b| / max(|a|, |b|, RELATIVE_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_FLOOR)
}

/// Picks `count` distinct scalar coordinates spread over `inputs`
/// (fewer if the inputs hold fewer scalars).
pub fn sample_coords<R: Rng + ?Sized>(inputs: &[Tensor], count: usize, rng: &mut R) -> Vec<Coord> {
    let total: usize = inputs.iter().map(Tensor::len).sum();
    let mut flat: Vec<usize> = sample(rng, total, count.min(total)).into_vec();
    flat.sort_unstable();
    flat.into_iter()
        .map(|mut k| {
            let mut t = 0;
            while k >= inputs[t].len() {
                k -= inputs[t].len();
                t += 1;
            }
            (t, k)
        })
        .collect()
}

/// Outcome of comparing analytic and numeric gradients.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub coords: Vec<Coord>,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

impl GradCheck {
    pub fn max_relative_error(&self) -> f64 {
        self.analytic
            .iter()
            .zip(&self.numeric)
            .map(|(&a, &n)| relative_error(a, n))
            .fold(0.0, f64::max)
    }
}

/// Compares `analytic` gradients (one tensor per input) with central
/// differences of `f` at the sampled coordinates.
pub fn check<F>(
    f: F,
    inputs: &[Tensor],
    analytic: &[Tensor],
    coords: Vec<Coord>,
    step: f64,
) -> GradCheck
where
    F: Fn(&[Tensor]) -> f64,
{
    let numeric = central_differences(f, inputs, &coords, step);
    let analytic = coords.iter().map(|&(t, i)| analytic[t].data()[i]).collect();
    GradCheck {
        coords,
        analytic,
        numeric,
    }
}
