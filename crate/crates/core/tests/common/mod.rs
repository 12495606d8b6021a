//! Slow, loop-based reference implementations used as test oracles. None
//! of them call into the library code they check.
#![allow(dead_code)]

use std::f64::consts::PI;

use lrformer_core::gfca::GfcaParams;
use lrformer_core::model::{ModelConfig, ModelParams, Variant};
use lrformer_core::numerics::autodiff::{Graph, Var};
use lrformer_core::numerics::gradcheck::{check, sample_coords, DEFAULT_STEP};
use lrformer_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(shape: &[usize], seed: u64) -> Tensor {
    Tensor::uniform(shape, -1.0, 1.0, &mut rng(seed))
}

/// Neumaier-compensated sum.
pub fn exact_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

/// Full DFT `X[m] = Σ x[k] e^{-2πi km/n}` by direct summation.
pub fn naive_dft(x: &[f64]) -> Vec<(f64, f64)> {
    let n = x.len();
    (0..n)
        .map(|m| {
            let ang = |k: usize| -2.0 * PI * ((k * m) % n) as f64 / n as f64;
            let re = exact_sum((0..n).map(|k| x[k] * ang(k).cos()));
            let im = exact_sum((0..n).map(|k| x[k] * ang(k).sin()));
            (re, im)
        })
        .collect()
}

/// Real signal from the half spectrum by direct synthesis; imaginary parts
/// of the DC and Nyquist bins are ignored.
pub fn naive_half_synthesis(re: &[f64], im: &[f64], n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let mut terms = vec![re[0], if k % 2 == 0 { re[n / 2] } else { -re[n / 2] }];
            for m in 1..n / 2 {
                let a = 2.0 * PI * ((k * m) % n) as f64 / n as f64;
                terms.push(2.0 * (re[m] * a.cos() - im[m] * a.sin()));
            }
            exact_sum(terms) / n as f64
        })
        .collect()
}

pub fn layer_norm_rows(x: &[Vec<f64>], gain: &[f64], bias: &[f64], eps: f64) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| {
            let f = row.len() as f64;
            let mean = row.iter().sum::<f64>() / f;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / f;
            row.iter()
                .enumerate()
                .map(|(j, v)| (v - mean) / (var + eps).sqrt() * gain[j] + bias[j])
                .collect()
        })
        .collect()
}

pub fn softmax_row(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let s = exact_sum(e.iter().copied());
    e.iter().map(|v| v / s).collect()
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / PI).sqrt() * (x + 0.044715 * x * x * x)).tanh())
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Zero-padded 3×3 convolution, stride 1.
pub fn conv_naive(x: &Tensor, k: &Tensor, b: Option<&Tensor>) -> Tensor {
    let (cin, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let cout = k.shape()[0];
    let (xd, kd) = (x.data(), k.data());
    let mut out = vec![0.0; cout * h * w];
    for o in 0..cout {
        for i in 0..h {
            for j in 0..w {
                let mut acc = b.map(|b| b.data()[o]).unwrap_or(0.0);
                for c in 0..cin {
                    for di in 0..3 {
                        for dj in 0..3 {
                            let (y, xx) = (i as i64 + di as i64 - 1, j as i64 + dj as i64 - 1);
                            if y < 0 || xx < 0 || y >= h as i64 || xx >= w as i64 {
                                continue;
                            }
                            acc += kd[((o * cin + c) * 3 + di) * 3 + dj]
                                * xd[(c * h + y as usize) * w + xx as usize];
                        }
                    }
                }
                out[(o * h + i) * w + j] = acc;
            }
        }
    }
    Tensor::new(&[cout, h, w], out).unwrap()
}

/// Sub-pixel rearrangement: channel `c·r² + i·r + j` at `(y, x)` goes to
/// channel `c` at `(y·r + i, x·r + j)`.
pub fn shuffle_naive(x: &Tensor, r: usize) -> Tensor {
    let (cr2, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let c = cr2 / (r * r);
    let mut out = vec![0.0; cr2 * h * w];
    for ch in 0..cr2 {
        let (co, i, j) = (ch / (r * r), (ch % (r * r)) / r, ch % r);
        for y in 0..h {
            for xx in 0..w {
                out[(co * h * r + y * r + i) * w * r + xx * r + j] =
                    x.data()[(ch * h + y) * w + xx];
            }
        }
    }
    Tensor::new(&[c, h * r, w * r], out).unwrap()
}

pub fn rows_of(t: &Tensor) -> Vec<Vec<f64>> {
    let cols = t.shape()[1];
    t.data().chunks(cols).map(|r| r.to_vec()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Tensor {
    Tensor::new(&[rows.len(), rows[0].len()], rows.concat()).unwrap()
}

fn matmul(a: &[Vec<f64>], b: &Tensor) -> Vec<Vec<f64>> {
    let (k, m) = (b.shape()[0], b.shape()[1]);
    a.iter()
        .map(|row| {
            (0..m)
                .map(|j| (0..k).map(|t| row[t] * b.data()[t * m + j]).sum())
                .collect()
        })
        .collect()
}

/// `softmax(scale · (l Q)(u K)ᵀ)(l V)` by explicit loops, single head.
pub fn attention_naive(
    l: &[Vec<f64>],
    u: &[Vec<f64>],
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    scale: f64,
) -> Vec<Vec<f64>> {
    let (qs, ks, vs) = (matmul(l, q), matmul(u, k), matmul(l, v));
    qs.iter()
        .map(|qi| {
            let logits: Vec<f64> = ks
                .iter()
                .map(|kj| scale * qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            let p = softmax_row(&logits);
            (0..vs[0].len())
                .map(|c| (0..vs.len()).map(|j| p[j] * vs[j][c]).sum())
                .collect()
        })
        .collect()
}

/// Pixel tokens `[HW][C]` of a `[C × H × W]` tensor.
fn pixel_tokens(f: &Tensor) -> Vec<Vec<f64>> {
    let c = f.shape()[0];
    let hw = f.len() / c;
    (0..hw)
        .map(|p| (0..c).map(|ch| f.data()[ch * hw + p]).collect())
        .collect()
}

fn from_pixel_tokens(tokens: &[Vec<f64>], shape: &[usize]) -> Tensor {
    let (c, hw) = (shape[0], tokens.len());
    let mut out = vec![0.0; c * hw];
    for (p, t) in tokens.iter().enumerate() {
        for ch in 0..c {
            out[ch * hw + p] = t[ch];
        }
    }
    Tensor::new(shape, out).unwrap()
}

fn vec_of(t: &Tensor) -> Vec<f64> {
    t.data().to_vec()
}

fn mlp_residual(y: &[Vec<f64>], p: &GfcaParams) -> Vec<Vec<f64>> {
    let z = layer_norm_rows(y, p.ln2_gain.data(), p.ln2_bias.data(), 1e-5);
    let hidden: Vec<Vec<f64>> = matmul(&z, &p.mlp_w1)
        .into_iter()
        .map(|r| {
            r.iter()
                .zip(p.mlp_b1.data())
                .map(|(a, b)| gelu(a + b))
                .collect()
        })
        .collect();
    matmul(&hidden, &p.mlp_w2)
        .into_iter()
        .zip(y)
        .map(|(o, yr)| {
            o.iter()
                .zip(p.mlp_b2.data())
                .zip(yr)
                .map(|((a, b), r)| r + a + b)
                .collect()
        })
        .collect()
}

/// Frequency cross-attention block, layer by layer.
pub fn gfca_block_oracle(
    f_l: &Tensor,
    f_u: &Tensor,
    p: &GfcaParams,
    scale: f64,
    mixup: bool,
) -> Tensor {
    let c = f_l.shape()[0];
    let n = f_l.len() / c;
    let bins = n / 2 + 1;
    let norm =
        |f: &Tensor| layer_norm_rows(&pixel_tokens(f), p.ln1_gain.data(), p.ln1_bias.data(), 1e-5);
    let (nl, nu) = (norm(f_l), norm(f_u));
    let s = 1.0 / (n as f64).sqrt();
    // tokens[bin][channel] for real and imaginary parts
    let spectrum = |tok: &[Vec<f64>]| {
        let mut re = vec![vec![0.0; c]; bins];
        let mut im = vec![vec![0.0; c]; bins];
        for ch in 0..c {
            let x: Vec<f64> = tok.iter().map(|t| t[ch]).collect();
            for (m, (r, i)) in naive_dft(&x).into_iter().take(bins).enumerate() {
                re[m][ch] = r * s;
                im[m][ch] = i * s;
            }
        }
        (re, im)
    };
    let (rl, il) = spectrum(&nl);
    let (ru, iu) = spectrum(&nu);
    let ar = attention_naive(&rl, &ru, &p.q_r, &p.k_r, &p.v_r, scale);
    let ai = attention_naive(&il, &iu, &p.q_i, &p.k_i, &p.v_i, scale);
    let (cr, ci) = if mixup {
        let g = sigmoid(p.theta.data()[0]);
        let mix = |a: &[Vec<f64>], b: &[Vec<f64>]| -> Vec<Vec<f64>> {
            a.iter()
                .zip(b)
                .map(|(x, y)| {
                    x.iter()
                        .zip(y)
                        .map(|(u, v)| g * u + (1.0 - g) * v)
                        .collect()
                })
                .collect()
        };
        (mix(&ar, &ai), mix(&ai, &ar))
    } else {
        (ar, ai)
    };
    let inv = (n as f64).sqrt();
    let mut y = pixel_tokens(f_l);
    for ch in 0..c {
        let re: Vec<f64> = cr.iter().map(|t| t[ch]).collect();
        let im: Vec<f64> = ci.iter().map(|t| t[ch]).collect();
        for (k, v) in naive_half_synthesis(&re, &im, n).into_iter().enumerate() {
            y[k][ch] += v * inv;
        }
    }
    from_pixel_tokens(&mlp_residual(&y, p), f_l.shape())
}

/// Spatial self-attention block of the non-frequency variants.
pub fn spatial_block_oracle(x: &Tensor, p: &GfcaParams, scale: f64) -> Tensor {
    let tok = pixel_tokens(x);
    let t = layer_norm_rows(&tok, p.ln1_gain.data(), p.ln1_bias.data(), 1e-5);
    let a = attention_naive(&t, &t, &p.q_r, &p.k_r, &p.v_r, scale);
    let b = attention_naive(&t, &t, &p.q_i, &p.k_i, &p.v_i, scale);
    let y: Vec<Vec<f64>> = tok
        .iter()
        .zip(a.iter().zip(&b))
        .map(|(r, (ra, rb))| {
            r.iter()
                .zip(ra.iter().zip(rb))
                .map(|(v, (u, w))| v + 0.5 * (u + w))
                .collect()
        })
        .collect();
    from_pixel_tokens(&mlp_residual(&y, p), x.shape())
}

/// Whole network, composed from the oracles above. Single head only.
pub fn model_oracle(
    lq: &Tensor,
    prior: &Tensor,
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Tensor {
    assert_eq!(cfg.heads, 1);
    let c = cfg.channels as f64;
    let scale = match cfg.scale {
        lrformer_core::ScaleMode::InvSqrtDim => 1.0 / c.sqrt(),
        lrformer_core::ScaleMode::Unit => 1.0,
    };
    let conv = |x: &Tensor, k: &lrformer_core::model::Conv| conv_naive(x, &k.weight, Some(&k.bias));
    let shallow = conv(lq, &params.embed);
    let f_u = params.prior_embed.as_ref().map(|k| conv(prior, k));
    let mut x = shallow.clone();
    for g in &params.groups {
        let input = x.clone();
        for b in &g.blocks {
            x = match cfg.variant {
                Variant::Full => gfca_block_oracle(&x, f_u.as_ref().unwrap(), b, scale, true),
                Variant::GfcaNoMixup => {
                    gfca_block_oracle(&x, f_u.as_ref().unwrap(), b, scale, false)
                }
                Variant::PriorMultiplicative => {
                    let u = f_u.as_ref().unwrap();
                    let fused = x.zip_map(u, |a, b| a + a * b).unwrap();
                    spatial_block_oracle(&fused, b, scale)
                }
                Variant::Baseline => spatial_block_oracle(&x, b, scale),
            };
        }
        x = conv(&x, &g.conv).add(&input).unwrap();
    }
    let mut deep = conv(&x, &params.final_conv).add(&shallow).unwrap();
    if let Some(up) = &params.upsample {
        deep = shuffle_naive(&conv(&deep, up), cfg.task.upscale());
    }
    conv(&deep, &params.decoder)
}

/// Pairwise fusion by brute force: (C, D, U).
pub fn fuse_brute(masks: &[Tensor], alpha: f64, beta: f64) -> (Tensor, Tensor, Tensor) {
    let n = masks[0].len();
    let mut c = vec![f64::NEG_INFINITY; n];
    let mut d = vec![f64::NEG_INFINITY; n];
    for i in 0..masks.len() {
        for j in i + 1..masks.len() {
            for p in 0..n {
                let (a, b) = (masks[i].data()[p], masks[j].data()[p]);
                c[p] = c[p].max(a.min(b));
                d[p] = d[p].max((a - b).abs());
            }
        }
    }
    let u: Vec<f64> = c
        .iter()
        .zip(&d)
        .map(|(x, y)| alpha * x + beta * y)
        .collect();
    let shape = masks[0].shape();
    (
        Tensor::new(shape, c).unwrap(),
        Tensor::new(shape, d).unwrap(),
        Tensor::new(shape, u).unwrap(),
    )
}

/// Gradient check of `build` under the scalar loss `Σ out ⊙ R` with fixed
/// random `R`. Returns the largest relative error over `count` sampled
/// coordinates.
pub fn grad_check<F>(inputs: &[Tensor], count: usize, seed: u64, build: F) -> f64
where
    F: for<'g> Fn(&'g Graph, &[Var<'g>]) -> Var<'g>,
{
    let probe = {
        let g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        build(&g, &vars).shape()
    };
    let weights = random(&probe, seed ^ 0xABCD);
    let loss = |g: &Graph, vars: &[Var]| -> f64 {
        let out = build(g, vars);
        out.mul(g.constant(weights.clone()))
            .unwrap()
            .sum()
            .unwrap()
            .value()
            .item()
            .unwrap()
    };
    let g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = build(&g, &vars)
        .mul(g.constant(weights.clone()))
        .unwrap()
        .sum()
        .unwrap();
    let grads = g.backward(out).unwrap();
    let analytic: Vec<Tensor> = vars.iter().map(|v| grads.wrt(*v)).collect();
    let coords = sample_coords(inputs, count, &mut rng(seed));
    let f = |xs: &[Tensor]| {
        let g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|t| g.constant(t.clone())).collect();
        loss(&g, &vars)
    };
    check(f, inputs, &analytic, coords, DEFAULT_STEP).max_relative_error()
}
