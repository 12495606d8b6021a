//! Attention cost model and wall-clock comparison.
//!
//! The analytic model counts attention-score work only:
//! vanilla cross-attention over `n` tokens costs `n²`, the frequency
//! variant costs `2n·log₂n` for the transforms plus `2·(n/2)² = n²/2` for
//! the two half-spectrum branches.

use std::fmt::Write as _;
use std::fs;
use std::hint::black_box;
use std::path::Path;
use std::time::Instant;

use lrformer_core::numerics::fft::{irfft_hermitian, is_power_of_two, rfft};
use lrformer_core::numerics::nn::{sigmoid, softmax_rows};
use lrformer_core::{Error, Result, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const CSV_HEADER: &str =
    "n,analytic_vanilla,analytic_gfca,deviation,measured_vanilla_ns,measured_gfca_ns,channels,repeats";
pub const WARMUP: usize = 2;
pub const MIN_REPEATS: usize = 5;
/// Largest score matrix `measure` will allocate.
pub const MEMORY_CAP_BYTES: usize = 4 << 30;
pub const DEFAULT_GRID: [usize; 7] = [64, 128, 256, 512, 1024, 2048, 4096];

#[derive(Clone, Debug, PartialEq)]
pub struct CostReport {
    pub n: usize,
    pub analytic_vanilla: f64,
    pub analytic_gfca: f64,
    pub deviation: f64,
    pub measured_vanilla_ns: Option<f64>,
    pub measured_gfca_ns: Option<f64>,
    pub channels: Option<usize>,
    pub repeats: Option<usize>,
}

pub fn analytic_cost(n: usize) -> Result<CostReport> {
    if n < 2 {
        return Err(Error::Usage(format!("token size must be >= 2, got {n}")));
    }
    let nf = n as f64;
    let analytic_vanilla = nf * nf;
    let analytic_gfca = 2.0 * nf * nf.log2() + 0.5 * nf * nf;
    Ok(CostReport {
        n,
        analytic_vanilla,
        analytic_gfca,
        deviation: analytic_vanilla - analytic_gfca,
        measured_vanilla_ns: None,
        measured_gfca_ns: None,
        channels: None,
        repeats: None,
    })
}

/// Score-matrix element counts: `(n², (n/2+1)²)`. The frequency count
/// covers one branch; the two branches are computed one after the other.
pub fn score_elements(n: usize) -> (usize, usize) {
    let bins = n / 2 + 1;
    (n * n, bins * bins)
}

pub fn memory_ratio(n: usize) -> f64 {
    let (v, g) = score_elements(n);
    g as f64 / v as f64
}

/// Projection work `3·n·C²`, identical for both variants.
pub fn projection_cost(n: usize, channels: usize) -> f64 {
    3.0 * n as f64 * (channels * channels) as f64
}

struct Qkv {
    q: Tensor,
    k: Tensor,
    v: Tensor,
}

/// `softmax((l Q)(u K)ᵀ / √C)(l V)` on `[tokens × C]` inputs.
fn attention(l: &Tensor, u: &Tensor, w: &Qkv) -> Result<Tensor> {
    let c = l.shape()[1];
    let scores = l
        .matmul(&w.q)?
        .matmul_nt(&u.matmul(&w.k)?)?
        .scale(1.0 / (c as f64).sqrt());
    softmax_rows(&scores)?.matmul(&l.matmul(&w.v)?)
}

/// Spatial cross-attention over the `n` columns of `[C × n]` feature rows.
pub fn vanilla_forward(l: &Tensor, u: &Tensor, w: &[Tensor; 3]) -> Result<Tensor> {
    let qkv = Qkv {
        q: w[0].clone(),
        k: w[1].clone(),
        v: w[2].clone(),
    };
    attention(&l.transpose()?, &u.transpose()?, &qkv)?.transpose()
}

/// Frequency cross-attention over the `n/2 + 1` packed bins of `[C × n]`
/// rows: transform, two branch attentions, mixup, inverse transform.
pub fn gfca_forward(
    l: &Tensor,
    u: &Tensor,
    w_r: &[Tensor; 3],
    w_i: &[Tensor; 3],
    theta: f64,
) -> Result<Tensor> {
    let (_, n) = l.dims2()?;
    let s = 1.0 / (n as f64).sqrt();
    let sl = rfft(l)?;
    let su = rfft(u)?;
    let tok = |t: &Tensor| -> Result<Tensor> { Ok(t.transpose()?.scale(s)) };
    let wr = Qkv {
        q: w_r[0].clone(),
        k: w_r[1].clone(),
        v: w_r[2].clone(),
    };
    let wi = Qkv {
        q: w_i[0].clone(),
        k: w_i[1].clone(),
        v: w_i[2].clone(),
    };
    let ar = attention(&tok(sl.real_part())?, &tok(su.real_part())?, &wr)?;
    let ai = attention(&tok(sl.imag_part())?, &tok(su.imag_part())?, &wi)?;
    let g = sigmoid(theta);
    let cr = ar.scale(g).add(&ai.scale(1.0 - g))?;
    let ci = ai.scale(g).add(&ar.scale(1.0 - g))?;
    Ok(irfft_hermitian(&cr.transpose()?, &ci.transpose()?, n)?.scale((n as f64).sqrt()))
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

fn time_ns(repeats: usize, mut f: impl FnMut() -> Result<Tensor>) -> Result<f64> {
    for _ in 0..WARMUP {
        black_box(f()?);
    }
    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t0 = Instant::now();
        black_box(f()?);
        samples.push(t0.elapsed().as_nanos() as f64);
    }
    Ok(median(samples))
}

/// Median single-thread wall-clock of both forwards at `n` tokens.
pub fn measure(n: usize, channels: usize, repeats: usize, seed: u64) -> Result<CostReport> {
    if !is_power_of_two(n) || n < 2 {
        return Err(Error::Sizing(format!(
            "token size must be a power of two >= 2, got {n}"
        )));
    }
    if repeats < MIN_REPEATS {
        return Err(Error::Usage(format!(
            "need at least {MIN_REPEATS} repeats, got {repeats}"
        )));
    }
    if channels == 0 {
        return Err(Error::Usage("channels must be >= 1".into()));
    }
    // scores plus their softmax are alive together
    let bytes = n
        .checked_mul(n)
        .and_then(|e| e.checked_mul(2 * std::mem::size_of::<f64>()));
    match bytes {
        Some(b) if b <= MEMORY_CAP_BYTES => {}
        _ => {
            return Err(Error::Capacity(format!(
                "a {n}x{n} score matrix exceeds the {} GiB cap",
                MEMORY_CAP_BYTES >> 30
            )))
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = Tensor::uniform(&[channels, n], -1.0, 1.0, &mut rng);
    let u = Tensor::uniform(&[channels, n], -1.0, 1.0, &mut rng);
    let b = 1.0 / (channels as f64).sqrt();
    let mut w = || -> [Tensor; 3] {
        std::array::from_fn(|_| Tensor::uniform(&[channels, channels], -b, b, &mut rng))
    };
    let (w_v, w_r, w_i) = (w(), w(), w());
    let vanilla = time_ns(repeats, || vanilla_forward(&l, &u, &w_v))?;
    let gfca = time_ns(repeats, || gfca_forward(&l, &u, &w_r, &w_i, 0.0))?;
    let mut report = analytic_cost(n)?;
    report.measured_vanilla_ns = Some(vanilla);
    report.measured_gfca_ns = Some(gfca);
    report.channels = Some(channels);
    report.repeats = Some(repeats);
    Ok(report)
}

/// `key=value` lines describing the measuring machine.
pub fn environment() -> Vec<(String, String)> {
    let threads = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    vec![
        ("os".into(), std::env::consts::OS.into()),
        ("arch".into(), std::env::consts::ARCH.into()),
        ("available_parallelism".into(), threads.to_string()),
        ("measured_threads".into(), "1".into()),
        ("bench_version".into(), env!("CARGO_PKG_VERSION").into()),
    ]
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn curve_csv(reports: &[CostReport]) -> String {
    let mut s = format!("{CSV_HEADER}\n");
    for r in reports {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.n,
            r.analytic_vanilla,
            r.analytic_gfca,
            r.deviation,
            opt(r.measured_vanilla_ns),
            opt(r.measured_gfca_ns),
            opt(r.channels),
            opt(r.repeats)
        );
    }
    s
}

pub fn write_csv(reports: &[CostReport], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, curve_csv(reports))?;
    Ok(())
}

/// Writes the analytic curve for `grid` and returns its rows.
pub fn emit_curve(grid: &[usize], path: &Path) -> Result<Vec<CostReport>> {
    if grid.is_empty() {
        return Err(Error::Usage("empty token grid".into()));
    }
    let reports = grid
        .iter()
        .map(|&n| analytic_cost(n))
        .collect::<Result<Vec<_>>>()?;
    write_csv(&reports, path)?;
    Ok(reports)
}
