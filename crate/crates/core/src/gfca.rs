//! Guided frequency cross-attention block.
//!
//! Image features `f_l` and prior features `f_u` (both `[C × H × W]`) are
//! layer-normalised per pixel, flattened to `[C × HW]` and transformed with
//! the packed real FFT along the `HW` axis. The `HW/2 + 1` frequency bins
//! become tokens with `C` features, split into a real and an imaginary
//! branch. Each branch runs cross-attention with queries and values from the
//! image stream and keys from the prior stream; the two results are blended
//! by a learnable sigmoid gate, transformed back and followed by a pre-norm
//! MLP. Both sub-layers are residual.
//!
//! The frequency tokens use orthonormal scaling (`1/√HW` forward, `√HW`
//! back) so token magnitudes do not grow with the patch size.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::autodiff::{concat_cols, stack, Graph, Var};
use crate::numerics::fft::is_power_of_two;
use crate::numerics::nn::LAYER_NORM_EPS;
use crate::numerics::tensor::Tensor;

/// Expansion factor of the MLP hidden layer.
pub const MLP_RATIO: usize = 4;

/// Softmax temperature applied to attention logits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ScaleMode {
    /// `1/√d` with `d` the per-head feature width.
    #[default]
    InvSqrtDim,
    /// No temperature, `softmax(QKᵀ)` as written.
    Unit,
}

impl ScaleMode {
    pub fn factor(self, head_dim: usize) -> f64 {
        match self {
            ScaleMode::InvSqrtDim => 1.0 / (head_dim as f64).sqrt(),
            ScaleMode::Unit => 1.0,
        }
    }
}

/// Per-block behaviour switches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockOptions {
    pub scale: ScaleMode,
    pub heads: usize,
    /// When false the two branches are not blended (`θ` is unused).
    pub mixup: bool,
}

impl Default for BlockOptions {
    fn default() -> Self {
        Self {
            scale: ScaleMode::InvSqrtDim,
            heads: 1,
            mixup: true,
        }
    }
}

param_struct! {
    /// Learnable parameters of one block with `C` channels.
    ///
    /// Projections are `[C × C]` (tokens multiply from the left), `theta` is
    /// a one-element mixup logit, the MLP is `[C × 4C]` then `[4C × C]`.
    /// `ln1_*` normalises both input streams, `ln2_*` precedes the MLP.
    GfcaParams {
        q_r, k_r, v_r, q_i, k_i, v_i,
        theta,
        ln1_gain, ln1_bias, ln2_gain, ln2_bias,
        mlp_w1, mlp_b1, mlp_w2, mlp_b2,
    }
}

fn uniform<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Tensor::uniform(shape, -bound, bound, rng)
}

impl GfcaParams<Tensor> {
    /// Fan-in uniform initialisation, unit LayerNorm gains and `θ = 0`.
    pub fn init<R: Rng + ?Sized>(channels: usize, rng: &mut R) -> Self {
        let c = channels;
        let hidden = MLP_RATIO * c;
        Self {
            q_r: uniform(&[c, c], c, rng),
            k_r: uniform(&[c, c], c, rng),
            v_r: uniform(&[c, c], c, rng),
            q_i: uniform(&[c, c], c, rng),
            k_i: uniform(&[c, c], c, rng),
            v_i: uniform(&[c, c], c, rng),
            theta: Tensor::scalar(0.0),
            ln1_gain: Tensor::ones(&[c]),
            ln1_bias: Tensor::zeros(&[c]),
            ln2_gain: Tensor::ones(&[c]),
            ln2_bias: Tensor::zeros(&[c]),
            mlp_w1: uniform(&[c, hidden], c, rng),
            mlp_b1: uniform(&[hidden], c, rng),
            mlp_w2: uniform(&[hidden, c], hidden, rng),
            mlp_b2: uniform(&[c], hidden, rng),
        }
    }

    /// All-zero parameters.
    pub fn zeros(channels: usize) -> Self {
        let c = channels;
        let hidden = MLP_RATIO * c;
        Self {
            q_r: Tensor::zeros(&[c, c]),
            k_r: Tensor::zeros(&[c, c]),
            v_r: Tensor::zeros(&[c, c]),
            q_i: Tensor::zeros(&[c, c]),
            k_i: Tensor::zeros(&[c, c]),
            v_i: Tensor::zeros(&[c, c]),
            theta: Tensor::scalar(0.0),
            ln1_gain: Tensor::zeros(&[c]),
            ln1_bias: Tensor::zeros(&[c]),
            ln2_gain: Tensor::zeros(&[c]),
            ln2_bias: Tensor::zeros(&[c]),
            mlp_w1: Tensor::zeros(&[c, hidden]),
            mlp_b1: Tensor::zeros(&[hidden]),
            mlp_w2: Tensor::zeros(&[hidden, c]),
            mlp_b2: Tensor::zeros(&[c]),
        }
    }

    pub fn channels(&self) -> usize {
        self.ln1_gain.len()
    }

    pub fn count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t| n += t.len());
        n
    }

    pub fn bind<'g>(&self, graph: &'g Graph) -> GfcaParams<Var<'g>> {
        self.map(&mut |_, t| graph.param(t.clone()))
    }
}

/// Real and imaginary frequency tokens, each `[bins × C]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchPair {
    pub real_branch: Tensor,
    pub imag_branch: Tensor,
}

impl BranchPair {
    pub fn new(real_branch: Tensor, imag_branch: Tensor) -> Result<Self> {
        real_branch.dims2()?;
        real_branch.expect_same_shape(&imag_branch)?;
        Ok(Self {
            real_branch,
            imag_branch,
        })
    }

    pub fn bins(&self) -> usize {
        self.real_branch.shape()[0]
    }
}

fn check_plane(h: usize, w: usize) -> Result<()> {
    if !is_power_of_two(h * w) || h * w < 2 {
        return Err(Error::Sizing(format!(
            "H·W must be a power of two >= 2, got {h}x{w}"
        )));
    }
    Ok(())
}

// --- tape API -------------------------------------------------------------

/// `[C × HW]` rows → (`[bins × C]` real tokens, `[bins × C]` imaginary tokens).
pub fn frequency_tokens_var<'g>(rows: Var<'g>) -> Result<(Var<'g>, Var<'g>)> {
    let (_, hw) = rows.value().dims2()?;
    check_plane(hw, 1)?;
    let spec = rows.rfft()?.scale(1.0 / (hw as f64).sqrt())?;
    Ok((spec.select(0)?.transpose()?, spec.select(1)?.transpose()?))
}

/// Inverse of [`frequency_tokens_var`], returning `[C × hw]` rows.
pub fn spatial_rows_var<'g>(real: Var<'g>, imag: Var<'g>, hw: usize) -> Result<Var<'g>> {
    let planes = stack(&[real.transpose()?, imag.transpose()?])?;
    planes.irfft(hw)?.scale((hw as f64).sqrt())
}

/// `softmax(scale · (l Q)(u K)ᵀ) · (l V)` over `[tokens × C]` inputs, split
/// into `heads` equal column groups.
pub fn branch_attention_var<'g>(
    tokens_l: Var<'g>,
    tokens_u: Var<'g>,
    q: Var<'g>,
    k: Var<'g>,
    v: Var<'g>,
    scale: ScaleMode,
    heads: usize,
) -> Result<Var<'g>> {
    let (n_l, c) = tokens_l.value().dims2()?;
    let (n_u, c_u) = tokens_u.value().dims2()?;
    if n_l != n_u || c != c_u {
        return Err(Error::dim(format!(
            "branch attention token grids differ: {n_l}x{c} vs {n_u}x{c_u}"
        )));
    }
    if heads == 0 || c % heads != 0 {
        return Err(Error::dim(format!(
            "{c} channels cannot split into {heads} heads"
        )));
    }
    let qs = tokens_l.matmul(q)?;
    let ks = tokens_u.matmul(k)?;
    let vs = tokens_l.matmul(v)?;
    let d = c / heads;
    let factor = scale.factor(d);
    if heads == 1 {
        return qs.matmul_nt(ks)?.scale(factor)?.softmax_rows()?.matmul(vs);
    }
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let (qh, kh, vh) = (
            qs.slice_cols(h * d, d)?,
            ks.slice_cols(h * d, d)?,
            vs.slice_cols(h * d, d)?,
        );
        outs.push(
            qh.matmul_nt(kh)?
                .scale(factor)?
                .softmax_rows()?
                .matmul(vh)?,
        );
    }
    concat_cols(&outs)
}

/// `(σ(θ)·a_r + (1−σ(θ))·a_i, σ(θ)·a_i + (1−σ(θ))·a_r)`
pub fn adaptive_mixup_var<'g>(
    attn_r: Var<'g>,
    attn_i: Var<'g>,
    theta: Var<'g>,
) -> Result<(Var<'g>, Var<'g>)> {
    let keep = theta.sigmoid()?;
    let swap = keep.scale(-1.0)?.add_scalar(1.0)?;
    let ca_r = attn_r
        .mul_scalar_var(keep)?
        .add(attn_i.mul_scalar_var(swap)?)?;
    let ca_i = attn_i
        .mul_scalar_var(keep)?
        .add(attn_r.mul_scalar_var(swap)?)?;
    Ok((ca_r, ca_i))
}

/// Pixel-wise LayerNorm of `[C × HW]` rows, returned as `[HW × C]` tokens.
pub(crate) fn pixel_tokens_norm<'g>(
    rows: Var<'g>,
    gain: Var<'g>,
    bias: Var<'g>,
) -> Result<Var<'g>> {
    rows.transpose()?.layer_norm(gain, bias, LAYER_NORM_EPS)
}

/// Pre-norm MLP sub-layer with residual on `[C × HW]` rows.
pub(crate) fn mlp_sublayer<'g>(y: Var<'g>, p: &GfcaParams<Var<'g>>) -> Result<Var<'g>> {
    let z = pixel_tokens_norm(y, p.ln2_gain, p.ln2_bias)?;
    let hdn = z.matmul(p.mlp_w1)?.add_row_bias(p.mlp_b1)?.gelu()?;
    let out = hdn.matmul(p.mlp_w2)?.add_row_bias(p.mlp_b2)?;
    y.add(out.transpose()?)
}

/// Full block on the tape. `f_l` and `f_u` are `[C × H × W]`.
pub fn gfca_block_var<'g>(
    f_l: Var<'g>,
    f_u: Var<'g>,
    p: &GfcaParams<Var<'g>>,
    opts: BlockOptions,
) -> Result<Var<'g>> {
    let (c, h, w) = f_l.value().dims3()?;
    if f_u.value().shape() != [c, h, w] {
        return Err(Error::dim(format!(
            "prior features {:?} do not match image features [{c}, {h}, {w}]",
            f_u.value().shape()
        )));
    }
    check_plane(h, w)?;
    let hw = h * w;
    let rows_l = f_l.reshape(&[c, hw])?;
    let rows_u = f_u.reshape(&[c, hw])?;

    let norm_l = pixel_tokens_norm(rows_l, p.ln1_gain, p.ln1_bias)?.transpose()?;
    let norm_u = pixel_tokens_norm(rows_u, p.ln1_gain, p.ln1_bias)?.transpose()?;
    let (re_l, im_l) = frequency_tokens_var(norm_l)?;
    let (re_u, im_u) = frequency_tokens_var(norm_u)?;

    let attn_r = branch_attention_var(re_l, re_u, p.q_r, p.k_r, p.v_r, opts.scale, opts.heads)?;
    let attn_i = branch_attention_var(im_l, im_u, p.q_i, p.k_i, p.v_i, opts.scale, opts.heads)?;
    let (ca_r, ca_i) = if opts.mixup {
        adaptive_mixup_var(attn_r, attn_i, p.theta)?
    } else {
        (attn_r, attn_i)
    };

    let y = rows_l.add(spatial_rows_var(ca_r, ca_i, hw)?)?;
    mlp_sublayer(y, p)?.reshape(&[c, h, w])
}

// --- tensor API -----------------------------------------------------------

/// Flattens `[C × H × W]` to `[C × HW]` and returns its frequency tokens.
pub fn to_frequency_tokens(f: &Tensor) -> Result<BranchPair> {
    let (c, h, w) = f.dims3()?;
    check_plane(h, w)?;
    let g = Graph::new();
    let rows = g.constant(f.reshape(&[c, h * w])?);
    let (re, im) = frequency_tokens_var(rows)?;
    let pair = BranchPair::new(re.value().clone(), im.value().clone());
    pair
}

/// Inverse of [`to_frequency_tokens`]. Imaginary parts of the DC and
/// Nyquist tokens are discarded.
pub fn from_frequency_tokens(pair: &BranchPair, h: usize, w: usize) -> Result<Tensor> {
    check_plane(h, w)?;
    let (bins, c) = pair.real_branch.dims2()?;
    if bins != h * w / 2 + 1 {
        return Err(Error::dim(format!(
            "{bins} tokens do not match a {h}x{w} plane"
        )));
    }
    let g = Graph::new();
    let re = g.constant(pair.real_branch.clone());
    let im = g.constant(pair.imag_branch.clone());
    let rows = spatial_rows_var(re, im, h * w)?;
    let out = rows.value().reshape(&[c, h, w])?;
    Ok(out)
}

/// Single-head cross-attention of one branch.
pub fn branch_attention(
    tokens_l: &Tensor,
    tokens_u: &Tensor,
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    scale: f64,
) -> Result<Tensor> {
    let (_, c) = tokens_l.dims2()?;
    for m in [q, k, v] {
        if m.shape() != [c, c] {
            return Err(Error::dim(format!(
                "projection {:?} must be [{c} x {c}]",
                m.shape()
            )));
        }
    }
    let g = Graph::new();
    let (l, u) = (g.constant(tokens_l.clone()), g.constant(tokens_u.clone()));
    let (n_u, c_u) = tokens_u.dims2()?;
    if n_u != tokens_l.shape()[0] || c_u != c {
        return Err(Error::dim("token grids differ"));
    }
    let qs = l.matmul(g.constant(q.clone()))?;
    let ks = u.matmul(g.constant(k.clone()))?;
    let vs = l.matmul(g.constant(v.clone()))?;
    let out = qs.matmul_nt(ks)?.scale(scale)?.softmax_rows()?.matmul(vs)?;
    let t = out.value().clone();
    Ok(t)
}

/// The `[tokens × tokens]` attention matrix `softmax(scale · (l Q)(u K)ᵀ)`.
pub fn attention_scores(
    tokens_l: &Tensor,
    tokens_u: &Tensor,
    q: &Tensor,
    k: &Tensor,
    scale: f64,
) -> Result<Tensor> {
    let logits = tokens_l
        .matmul(q)?
        .matmul_nt(&tokens_u.matmul(k)?)?
        .scale(scale);
    crate::numerics::nn::softmax_rows(&logits)
}

pub fn adaptive_mixup(attn_r: &Tensor, attn_i: &Tensor, theta: f64) -> Result<(Tensor, Tensor)> {
    attn_r.expect_same_shape(attn_i)?;
    let g = Graph::new();
    let (r, i) = adaptive_mixup_var(
        g.constant(attn_r.clone()),
        g.constant(attn_i.clone()),
        g.constant(Tensor::scalar(theta)),
    )?;
    let out = (r.value().clone(), i.value().clone());
    Ok(out)
}

pub fn gfca_block(
    f_l: &Tensor,
    f_u: &Tensor,
    params: &GfcaParams,
    opts: BlockOptions,
) -> Result<Tensor> {
    let g = Graph::new();
    let p = params.map(&mut |_, t| g.constant(t.clone()));
    let out = gfca_block_var(g.constant(f_l.clone()), g.constant(f_u.clone()), &p, opts)?;
    let t = out.value().clone();
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_image_has_only_dc_token() {
        let f = Tensor::full(&[2, 4, 4], 3.0);
        let pair = to_frequency_tokens(&f).unwrap();
        assert_eq!(pair.bins(), 9);
        for (m, row) in pair.real_branch.data().chunks(2).enumerate() {
            for &v in row {
                if m == 0 {
                    assert!((v - 12.0).abs() < 1e-12);
                } else {
                    assert!(v.abs() < 1e-12);
                }
            }
        }
        assert!(pair.imag_branch.max_abs() < 1e-12);
    }

    #[test]
    fn non_power_of_two_plane_rejected() {
        let f = Tensor::ones(&[1, 3, 4]);
        assert!(matches!(to_frequency_tokens(&f), Err(Error::Sizing(_))));
    }

    #[test]
    fn single_token_attention_is_value_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = Tensor::uniform(&[1, 3], -1.0, 1.0, &mut rng);
        let u = Tensor::uniform(&[1, 3], -1.0, 1.0, &mut rng);
        let q = Tensor::uniform(&[3, 3], -1.0, 1.0, &mut rng);
        let k = Tensor::uniform(&[3, 3], -1.0, 1.0, &mut rng);
        let v = Tensor::uniform(&[3, 3], -1.0, 1.0, &mut rng);
        let out = branch_attention(&l, &u, &q, &k, &v, 0.7).unwrap();
        assert!(out.max_abs_diff(&l.matmul(&v).unwrap()).unwrap() < 1e-15);
    }

    #[test]
    fn zero_logits_average_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let l = Tensor::uniform(&[5, 2], -1.0, 1.0, &mut rng);
        let u = Tensor::uniform(&[5, 2], -1.0, 1.0, &mut rng);
        let v = Tensor::uniform(&[2, 2], -1.0, 1.0, &mut rng);
        let z = Tensor::zeros(&[2, 2]);
        let out = branch_attention(&l, &u, &z, &z, &v, 3.0).unwrap();
        let lv = l.matmul(&v).unwrap();
        for j in 0..2 {
            let mean: f64 = (0..5).map(|i| lv.data()[i * 2 + j]).sum::<f64>() / 5.0;
            for i in 0..5 {
                assert!((out.data()[i * 2 + j] - mean).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn mixup_closed_forms() {
        let a = Tensor::new(&[1], vec![4.0]).unwrap();
        let b = Tensor::new(&[1], vec![0.0]).unwrap();
        let (r, i) = adaptive_mixup(&a, &b, 3f64.ln()).unwrap();
        assert!((r.data()[0] - 3.0).abs() < 1e-14);
        assert!((i.data()[0] - 1.0).abs() < 1e-14);
        let (r, i) = adaptive_mixup(&a, &b, 0.0).unwrap();
        assert_eq!(r, i);
        assert_eq!(r.data()[0], 2.0);
        let (r, i) = adaptive_mixup(&a, &b, 1e4).unwrap();
        assert_eq!((r, i), (a, b));
    }

    #[test]
    fn zero_paths_are_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f_l = Tensor::uniform(&[3, 4, 4], -1.0, 1.0, &mut rng);
        let f_u = Tensor::uniform(&[3, 4, 4], -1.0, 1.0, &mut rng);
        let mut p = GfcaParams::init(3, &mut rng);
        p.v_r = Tensor::zeros(&[3, 3]);
        p.v_i = Tensor::zeros(&[3, 3]);
        p.mlp_w2 = Tensor::zeros(&[12, 3]);
        p.mlp_b2 = Tensor::zeros(&[3]);
        let out = gfca_block(&f_l, &f_u, &p, BlockOptions::default()).unwrap();
        assert!(out.max_abs_diff(&f_l).unwrap() < 1e-10);
    }

    #[test]
    fn multi_head_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = Tensor::uniform(&[4, 2, 4], -1.0, 1.0, &mut rng);
        let p = GfcaParams::init(4, &mut rng);
        let opts = BlockOptions {
            heads: 2,
            ..Default::default()
        };
        let out = gfca_block(&f, &f, &p, opts).unwrap();
        assert_eq!(out.shape(), &[4, 2, 4]);
        let bad = BlockOptions {
            heads: 3,
            ..Default::default()
        };
        assert!(gfca_block(&f, &f, &p, bad).is_err());
    }

    #[test]
    fn param_count_closed_form() {
        let p = GfcaParams::zeros(4);
        assert_eq!(p.count(), 6 * 16 + 1 + 4 * 4 + (4 * 16 + 16 + 16 * 4 + 4));
    }
}
