//! Restoration network: pixel embedding, grouped attention blocks with
//! residual convolutions, and task-specific decoders.
//!
//! ```text
//! lq ──conv──► shallow ─┬─► [group: M blocks ─► conv, + group input] × N ─► conv ─(+)─► decoder
//!                       └──────────────────────────────────────────────────────┘
//! prior ──conv──► f_u (fed unchanged to every block)
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;

use crate::container::Container;
use crate::error::{Error, Result};
use crate::gfca::{
    branch_attention_var, gfca_block_var, mlp_sublayer, pixel_tokens_norm, BlockOptions,
    GfcaParams, ScaleMode,
};
use crate::numerics::autodiff::{Graph, Var};
use crate::numerics::fft::is_power_of_two;
use crate::numerics::tensor::Tensor;

pub const CHECKPOINT_KIND: &str = "checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Denoise,
    SuperResolve(usize),
    ArtifactRemoval,
}

impl Task {
    /// Output extent multiplier.
    pub fn upscale(self) -> usize {
        match self {
            Task::SuperResolve(r) => r,
            _ => 1,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Denoise => write!(f, "denoise"),
            Task::SuperResolve(r) => write!(f, "sr-x{r}"),
            Task::ArtifactRemoval => write!(f, "artifact"),
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "denoise" => Ok(Task::Denoise),
            "artifact" => Ok(Task::ArtifactRemoval),
            "sr-x2" => Ok(Task::SuperResolve(2)),
            "sr-x4" => Ok(Task::SuperResolve(4)),
            _ => Err(Error::usage(format!(
                "unknown task '{s}' (expected denoise, sr-x2, sr-x4 or artifact)"
            ))),
        }
    }
}

/// Architecture variants used by the component ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// Spatial self-attention blocks, no prior.
    Baseline,
    /// Spatial self-attention; before each block the features are modulated
    /// by the embedded prior, `x ← x + x ⊙ f_u`.
    PriorMultiplicative,
    /// Frequency cross-attention without the adaptive mixup.
    GfcaNoMixup,
    /// Frequency cross-attention with adaptive mixup.
    Full,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Baseline,
        Variant::PriorMultiplicative,
        Variant::GfcaNoMixup,
        Variant::Full,
    ];

    pub fn uses_prior(self) -> bool {
        !matches!(self, Variant::Baseline)
    }

    pub fn frequency_attention(self) -> bool {
        matches!(self, Variant::GfcaNoMixup | Variant::Full)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Baseline => "baseline",
            Variant::PriorMultiplicative => "prior",
            Variant::GfcaNoMixup => "gfca-no-am",
            Variant::Full => "full",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.to_string() == s)
            .ok_or_else(|| {
                Error::usage(format!(
                    "unknown variant '{s}' (expected baseline, prior, gfca-no-am or full)"
                ))
            })
    }
}

pub fn parse_scale_mode(s: &str) -> Result<ScaleMode> {
    match s {
        "inv-sqrt-dim" => Ok(ScaleMode::InvSqrtDim),
        "unit" => Ok(ScaleMode::Unit),
        _ => Err(Error::usage(format!(
            "unknown softmax scale '{s}' (inv-sqrt-dim or unit)"
        ))),
    }
}

pub fn scale_mode_name(mode: ScaleMode) -> &'static str {
    match mode {
        ScaleMode::InvSqrtDim => "inv-sqrt-dim",
        ScaleMode::Unit => "unit",
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub groups: usize,
    pub blocks_per_group: usize,
    pub channels: usize,
    pub task: Task,
    pub heads: usize,
    pub scale: ScaleMode,
    pub variant: Variant,
}

impl Default for ModelConfig {
    /// Desk-scale configuration: 2 groups of 2 blocks, 16 channels.
    fn default() -> Self {
        Self {
            groups: 2,
            blocks_per_group: 2,
            channels: 16,
            task: Task::Denoise,
            heads: 1,
            scale: ScaleMode::InvSqrtDim,
            variant: Variant::Full,
        }
    }
}

impl ModelConfig {
    /// Full-scale width and depth: 6 groups of 6 blocks, 180 channels.
    pub fn full_scale() -> Self {
        Self {
            groups: 6,
            blocks_per_group: 6,
            channels: 180,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups == 0 || self.blocks_per_group == 0 || self.channels == 0 {
            return Err(Error::usage(
                "groups, blocks_per_group and channels must be >= 1",
            ));
        }
        if let Task::SuperResolve(r) = self.task {
            if r != 2 && r != 4 {
                return Err(Error::usage(format!(
                    "super-resolution factor must be 2 or 4, got {r}"
                )));
            }
        }
        if self.heads == 0 || !self.channels.is_multiple_of(self.heads) {
            return Err(Error::usage(format!(
                "{} channels cannot be split into {} heads",
                self.channels, self.heads
            )));
        }
        Ok(())
    }

    pub fn block_options(&self) -> BlockOptions {
        BlockOptions {
            scale: self.scale,
            heads: self.heads,
            mixup: self.variant == Variant::Full,
        }
    }

    pub fn to_meta(&self, c: &mut Container) {
        c.set_meta("groups", self.groups);
        c.set_meta("blocks_per_group", self.blocks_per_group);
        c.set_meta("channels", self.channels);
        c.set_meta("task", self.task);
        c.set_meta("heads", self.heads);
        c.set_meta("softmax_scale", scale_mode_name(self.scale));
        c.set_meta("variant", self.variant);
    }

    pub fn from_meta(c: &Container) -> Result<Self> {
        let cfg = Self {
            groups: c.meta_parse("groups")?,
            blocks_per_group: c.meta_parse("blocks_per_group")?,
            channels: c.meta_parse("channels")?,
            task: c.meta_parse::<String>("task")?.parse()?,
            heads: c.meta_parse("heads")?,
            scale: parse_scale_mode(&c.meta_parse::<String>("softmax_scale")?)?,
            variant: c.meta_parse::<String>("variant")?.parse()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

param_struct! {
    /// 3×3 convolution: weight `[C_out × C_in × 3 × 3]`, bias `[C_out]`.
    Conv { weight, bias }
}

impl Conv<Tensor> {
    pub fn init<R: Rng + ?Sized>(cin: usize, cout: usize, rng: &mut R) -> Self {
        let bound = 1.0 / ((cin * 9) as f64).sqrt();
        Self {
            weight: Tensor::uniform(&[cout, cin, 3, 3], -bound, bound, rng),
            bias: Tensor::uniform(&[cout], -bound, bound, rng),
        }
    }

    pub fn zeros(cin: usize, cout: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[cout, cin, 3, 3]),
            bias: Tensor::zeros(&[cout]),
        }
    }
}

impl<'g> Conv<Var<'g>> {
    pub fn apply(&self, x: Var<'g>) -> Result<Var<'g>> {
        x.conv2d(self.weight, Some(self.bias))
    }
}

/// One group: `M` blocks then a residual 3×3 convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct Group<T = Tensor> {
    pub blocks: Vec<GfcaParams<T>>,
    pub conv: Conv<T>,
}

/// Parameter tree of the whole network. Its shape is a function of the
/// [`ModelConfig`] alone.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T = Tensor> {
    pub embed: Conv<T>,
    /// Present for variants that consume the prior.
    pub prior_embed: Option<Conv<T>>,
    pub groups: Vec<Group<T>>,
    pub final_conv: Conv<T>,
    /// `C → C·r²` convolution ahead of the pixel shuffle (super-resolution).
    pub upsample: Option<Conv<T>>,
    pub decoder: Conv<T>,
}

impl<T> ModelParams<T> {
    pub fn map<U>(&self, f: &mut impl FnMut(&str, &T) -> U) -> ModelParams<U> {
        let mut sub = |prefix: &str, c: &Conv<T>| c.map(&mut |n, t| f(&format!("{prefix}.{n}"), t));
        let embed = sub("embed", &self.embed);
        let prior_embed = self.prior_embed.as_ref().map(|c| sub("prior_embed", c));
        let mut groups = Vec::with_capacity(self.groups.len());
        for (gi, g) in self.groups.iter().enumerate() {
            let blocks = g
                .blocks
                .iter()
                .enumerate()
                .map(|(bi, b)| b.map(&mut |n, t| f(&format!("groups.{gi}.blocks.{bi}.{n}"), t)))
                .collect();
            let conv = g
                .conv
                .map(&mut |n, t| f(&format!("groups.{gi}.conv.{n}"), t));
            groups.push(Group { blocks, conv });
        }
        let mut sub = |prefix: &str, c: &Conv<T>| c.map(&mut |n, t| f(&format!("{prefix}.{n}"), t));
        let final_conv = sub("final_conv", &self.final_conv);
        let upsample = self.upsample.as_ref().map(|c| sub("upsample", c));
        let decoder = sub("decoder", &self.decoder);
        ModelParams {
            embed,
            prior_embed,
            groups,
            final_conv,
            upsample,
            decoder,
        }
    }

    /// Visits every leaf in a fixed order with its dotted path.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&str, &'a T)) {
        self.embed.visit(&mut |n, t| f(&format!("embed.{n}"), t));
        if let Some(c) = &self.prior_embed {
            c.visit(&mut |n, t| f(&format!("prior_embed.{n}"), t));
        }
        for (gi, g) in self.groups.iter().enumerate() {
            for (bi, b) in g.blocks.iter().enumerate() {
                b.visit(&mut |n, t| f(&format!("groups.{gi}.blocks.{bi}.{n}"), t));
            }
            g.conv
                .visit(&mut |n, t| f(&format!("groups.{gi}.conv.{n}"), t));
        }
        self.final_conv
            .visit(&mut |n, t| f(&format!("final_conv.{n}"), t));
        if let Some(c) = &self.upsample {
            c.visit(&mut |n, t| f(&format!("upsample.{n}"), t));
        }
        self.decoder
            .visit(&mut |n, t| f(&format!("decoder.{n}"), t));
    }

    pub fn visit_mut(&mut self, f: &mut impl FnMut(&str, &mut T)) {
        self.embed
            .visit_mut(&mut |n, t| f(&format!("embed.{n}"), t));
        if let Some(c) = &mut self.prior_embed {
            c.visit_mut(&mut |n, t| f(&format!("prior_embed.{n}"), t));
        }
        for (gi, g) in self.groups.iter_mut().enumerate() {
            for (bi, b) in g.blocks.iter_mut().enumerate() {
                b.visit_mut(&mut |n, t| f(&format!("groups.{gi}.blocks.{bi}.{n}"), t));
            }
            g.conv
                .visit_mut(&mut |n, t| f(&format!("groups.{gi}.conv.{n}"), t));
        }
        self.final_conv
            .visit_mut(&mut |n, t| f(&format!("final_conv.{n}"), t));
        if let Some(c) = &mut self.upsample {
            c.visit_mut(&mut |n, t| f(&format!("upsample.{n}"), t));
        }
        self.decoder
            .visit_mut(&mut |n, t| f(&format!("decoder.{n}"), t));
    }
}

impl ModelParams<Tensor> {
    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let c = config.channels;
        let r = config.task.upscale();
        let embed = Conv::init(1, c, rng);
        let prior_embed = config.variant.uses_prior().then(|| Conv::init(1, c, rng));
        let groups = (0..config.groups)
            .map(|_| {
                let blocks = (0..config.blocks_per_group)
                    .map(|_| GfcaParams::init(c, rng))
                    .collect();
                Group {
                    blocks,
                    conv: Conv::init(c, c, rng),
                }
            })
            .collect();
        let final_conv = Conv::init(c, c, rng);
        let upsample = (r > 1).then(|| Conv::init(c, c * r * r, rng));
        let decoder = Conv::init(c, 1, rng);
        Ok(Self {
            embed,
            prior_embed,
            groups,
            final_conv,
            upsample,
            decoder,
        })
    }

    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let c = config.channels;
        let r = config.task.upscale();
        Ok(Self {
            embed: Conv::zeros(1, c),
            prior_embed: config.variant.uses_prior().then(|| Conv::zeros(1, c)),
            groups: (0..config.groups)
                .map(|_| Group {
                    blocks: (0..config.blocks_per_group)
                        .map(|_| GfcaParams::zeros(c))
                        .collect(),
                    conv: Conv::zeros(c, c),
                })
                .collect(),
            final_conv: Conv::zeros(c, c),
            upsample: (r > 1).then(|| Conv::zeros(c, c * r * r)),
            decoder: Conv::zeros(c, 1),
        })
    }

    pub fn bind<'g>(&self, graph: &'g Graph) -> ModelParams<Var<'g>> {
        self.map(&mut |_, t| graph.param(t.clone()))
    }

    /// Leaves in visiting order.
    pub fn flatten(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        self.visit(&mut |_, t| out.push(t));
        out
    }

    pub fn flatten_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<*mut Tensor> = Vec::new();
        self.visit_mut(&mut |_, t| out.push(t as *mut Tensor));
        // SAFETY: visit_mut yields each leaf exactly once, so the pointers
        // are unique and all borrow from `self` for the returned lifetime.
        out.into_iter().map(|p| unsafe { &mut *p }).collect()
    }
}

pub fn count_parameters(params: &ModelParams) -> usize {
    let mut n = 0;
    params.visit(&mut |_, t| n += t.len());
    n
}

/// Spatial self-attention block used by the non-frequency variants. Two
/// attention maps (reusing the `*_r` and `*_i` projections) are averaged so
/// the parameter tree matches the frequency block.
fn spatial_block_var<'g>(
    x: Var<'g>,
    p: &GfcaParams<Var<'g>>,
    opts: BlockOptions,
) -> Result<Var<'g>> {
    let (c, h, w) = x.value().dims3()?;
    let rows = x.reshape(&[c, h * w])?;
    let tokens = pixel_tokens_norm(rows, p.ln1_gain, p.ln1_bias)?;
    let a = branch_attention_var(tokens, tokens, p.q_r, p.k_r, p.v_r, opts.scale, opts.heads)?;
    let b = branch_attention_var(tokens, tokens, p.q_i, p.k_i, p.v_i, opts.scale, opts.heads)?;
    let attn = a.add(b)?.scale(0.5)?;
    let y = rows.add(attn.transpose()?)?;
    mlp_sublayer(y, p)?.reshape(&[c, h, w])
}

fn check_inputs(lq: &Tensor, prior: Option<&Tensor>, config: &ModelConfig) -> Result<()> {
    let (c, h, w) = lq.dims3()?;
    if c != 1 {
        return Err(Error::dim(format!(
            "expected a single-channel image, got {c} channels"
        )));
    }
    if config.variant.frequency_attention() && !is_power_of_two(h * w) {
        return Err(Error::Sizing(format!(
            "H·W must be a power of two, got {h}x{w}"
        )));
    }
    if let Some(p) = prior {
        if p.shape() != lq.shape() {
            return Err(Error::dim(format!(
                "prior {:?} does not match image {:?}",
                p.shape(),
                lq.shape()
            )));
        }
    }
    Ok(())
}

/// Forward pass on a tape. `prior` is required for variants that use it.
pub fn forward_var<'g>(
    lq: Var<'g>,
    prior: Option<Var<'g>>,
    params: &ModelParams<Var<'g>>,
    config: &ModelConfig,
) -> Result<Var<'g>> {
    check_inputs(
        &lq.value(),
        prior.map(|p| p.value().clone()).as_ref(),
        config,
    )?;
    let opts = config.block_options();
    let shallow = params.embed.apply(lq)?;
    let f_u = match (&params.prior_embed, prior) {
        (Some(conv), Some(u)) => Some(conv.apply(u)?),
        (Some(_), None) => {
            return Err(Error::MissingInput(format!(
                "variant '{}' needs a prior map",
                config.variant
            )))
        }
        (None, _) => None,
    };

    let mut x = shallow;
    for group in &params.groups {
        let group_in = x;
        for block in &group.blocks {
            x = match (config.variant, f_u) {
                (Variant::GfcaNoMixup | Variant::Full, Some(u)) => {
                    gfca_block_var(x, u, block, opts)?
                }
                (Variant::PriorMultiplicative, Some(u)) => {
                    spatial_block_var(x.add(x.mul(u)?)?, block, opts)?
                }
                _ => spatial_block_var(x, block, opts)?,
            };
        }
        x = group.conv.apply(x)?.add(group_in)?;
    }
    let mut deep = params.final_conv.apply(x)?.add(shallow)?;
    if let Some(up) = &params.upsample {
        deep = up.apply(deep)?.pixel_shuffle(config.task.upscale())?;
    }
    params.decoder.apply(deep)
}

/// Restores `lq` (`[1 × H × W]`) guided by `prior` (same shape). Returns
/// `[1 × rH × rW]` with `r` the task's upscale factor.
pub fn forward(
    lq: &Tensor,
    prior: &Tensor,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<Tensor> {
    let g = Graph::new();
    let p = params.map(&mut |_, t| g.constant(t.clone()));
    let u = config
        .variant
        .uses_prior()
        .then(|| g.constant(prior.clone()));
    check_inputs(lq, Some(prior), config)?;
    let out = forward_var(g.constant(lq.clone()), u, &p, config)?;
    let t = out.value().clone();
    Ok(t)
}

/// Mean absolute error.
pub fn l1_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    Ok(pred
        .sub(target)?
        .data()
        .iter()
        .map(|v| v.abs())
        .sum::<f64>()
        / pred.len() as f64)
}

pub fn l1_loss_var<'g>(pred: Var<'g>, target: Var<'g>) -> Result<Var<'g>> {
    pred.sub(target)?.abs()?.mean()
}

pub fn save_checkpoint(path: &Path, config: &ModelConfig, params: &ModelParams) -> Result<()> {
    checkpoint_container(config, params).write(path)
}

pub fn checkpoint_container(config: &ModelConfig, params: &ModelParams) -> Container {
    let mut c = Container::new()
        .with_meta("kind", CHECKPOINT_KIND)
        .with_meta("checkpoint_version", CHECKPOINT_VERSION);
    config.to_meta(&mut c);
    params.visit(&mut |name, t| c.push(name, t.clone()));
    c
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelConfig, ModelParams)> {
    checkpoint_from_container(&Container::read(path)?)
}

pub fn checkpoint_from_container(c: &Container) -> Result<(ModelConfig, ModelParams)> {
    if c.meta("kind") != Some(CHECKPOINT_KIND) {
        return Err(Error::Format("container is not a model checkpoint".into()));
    }
    let version: u32 = c.meta_parse("checkpoint_version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let config = ModelConfig::from_meta(c)?;
    let mut params = ModelParams::zeros(&config)?;
    let mut problem = None;
    let mut expected = 0;
    params.visit_mut(&mut |name, slot| {
        expected += 1;
        match c.tensor(name) {
            Some(t) if t.shape() == slot.shape() => *slot = t.clone(),
            Some(t) => {
                problem.get_or_insert(format!(
                    "'{name}' has shape {:?}, expected {:?}",
                    t.shape(),
                    slot.shape()
                ));
            }
            None => {
                problem.get_or_insert(format!("missing tensor '{name}'"));
            }
        }
    });
    if let Some(p) = problem {
        return Err(Error::Format(format!("checkpoint: {p}")));
    }
    if c.tensors().len() != expected {
        return Err(Error::Format(format!(
            "checkpoint holds {} tensors, configuration expects {expected}",
            c.tensors().len()
        )));
    }
    Ok((config, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny(task: Task) -> ModelConfig {
        ModelConfig {
            groups: 1,
            blocks_per_group: 1,
            channels: 4,
            task,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn zero_params_give_constant_bias_image() {
        let cfg = tiny(Task::Denoise);
        let mut p = ModelParams::zeros(&cfg).unwrap();
        p.decoder.bias = Tensor::scalar(0.25);
        let lq = Tensor::from_fn(&[1, 8, 8], |i| (i as f64 * 0.37).sin());
        let out = forward(&lq, &Tensor::zeros(&[1, 8, 8]), &p, &cfg).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn output_shapes_per_task() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lq = Tensor::uniform(&[1, 8, 8], 0.0, 1.0, &mut rng);
        let u = Tensor::uniform(&[1, 8, 8], 0.0, 1.0, &mut rng);
        for (task, side) in [
            (Task::Denoise, 8),
            (Task::ArtifactRemoval, 8),
            (Task::SuperResolve(2), 16),
            (Task::SuperResolve(4), 32),
        ] {
            let cfg = tiny(task);
            let p = ModelParams::init(&cfg, &mut rng).unwrap();
            assert_eq!(
                forward(&lq, &u, &p, &cfg).unwrap().shape(),
                &[1, side, side]
            );
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = tiny(Task::Denoise);
        let p = ModelParams::zeros(&cfg).unwrap();
        let lq = Tensor::zeros(&[1, 8, 8]);
        assert!(forward(&lq, &Tensor::zeros(&[1, 4, 8]), &p, &cfg).is_err());
        assert!(forward(
            &Tensor::zeros(&[1, 6, 6]),
            &Tensor::zeros(&[1, 6, 6]),
            &p,
            &cfg
        )
        .is_err());
        let bad = ModelConfig {
            task: Task::SuperResolve(3),
            ..cfg
        };
        assert!(ModelParams::zeros(&bad).is_err());
    }

    #[test]
    fn single_conv_count() {
        assert_eq!(
            Conv::zeros(1, 1).weight.len() + Conv::zeros(1, 1).bias.len(),
            10
        );
    }

    #[test]
    fn names_are_unique() {
        let p = ModelParams::zeros(&ModelConfig {
            task: Task::SuperResolve(2),
            ..ModelConfig::default()
        })
        .unwrap();
        let mut names = Vec::new();
        p.visit(&mut |n, _| names.push(n.to_string()));
        let total = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), total);
        assert!(names.contains(&"groups.1.blocks.0.theta".to_string()));
    }

    #[test]
    fn enum_strings_roundtrip() {
        for v in Variant::ALL {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        for t in [
            Task::Denoise,
            Task::ArtifactRemoval,
            Task::SuperResolve(2),
            Task::SuperResolve(4),
        ] {
            assert_eq!(t.to_string().parse::<Task>().unwrap(), t);
        }
        assert!("sr-x3".parse::<Task>().is_err());
    }
}
