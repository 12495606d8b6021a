//! Tiled inference and PSNR/SSIM reports.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{forward, ModelConfig, ModelParams};
use crate::numerics::tensor::Tensor;
use crate::pipeline::dataset::{Dataset, Sample, Split};
use crate::pipeline::degrade::bicubic_resize;
use crate::pipeline::metrics::{psnr, ssim};
use crate::pipeline::train::{crop, prior_of};

pub const PEAK: f64 = 1.0;
pub const REPORT_HEADER: &str = "id,psnr_db,ssim,input_psnr_db,input_ssim";

#[derive(Clone, Debug, PartialEq)]
pub struct ImageScore {
    pub id: String,
    pub psnr_db: f64,
    pub ssim: f64,
    /// Scores of the degraded input (bicubic-upsampled for SR).
    pub input_psnr_db: f64,
    pub input_ssim: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// Mean over images; infinite if any image is reproduced exactly.
    pub psnr_db: f64,
    pub ssim: f64,
    pub input_psnr_db: f64,
    pub input_ssim: f64,
    pub images: Vec<ImageScore>,
}

impl EvalReport {
    pub fn from_images(images: Vec<ImageScore>) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::MissingInput("no images to evaluate".into()));
        }
        let n = images.len() as f64;
        let mean = |f: fn(&ImageScore) -> f64| images.iter().map(f).sum::<f64>() / n;
        Ok(Self {
            psnr_db: mean(|s| s.psnr_db),
            ssim: mean(|s| s.ssim),
            input_psnr_db: mean(|s| s.input_psnr_db),
            input_ssim: mean(|s| s.input_ssim),
            images,
        })
    }

    /// Per-image rows followed by a `mean` row. Infinite PSNR is written as
    /// `inf`.
    pub fn to_csv(&self) -> String {
        let mut s = format!("{REPORT_HEADER}\n");
        for r in &self.images {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.id,
                fmt_db(r.psnr_db),
                r.ssim,
                fmt_db(r.input_psnr_db),
                r.input_ssim
            );
        }
        let _ = writeln!(
            s,
            "mean,{},{},{},{}",
            fmt_db(self.psnr_db),
            self.ssim,
            fmt_db(self.input_psnr_db),
            self.input_ssim
        );
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

pub fn fmt_db(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        v.to_string()
    }
}

/// Restores a whole image tile by tile (`tile × tile` input tiles, no
/// overlap). Image extents must be multiples of `tile`.
pub fn restore(
    lq: &Tensor,
    prior: &Tensor,
    params: &ModelParams,
    config: &ModelConfig,
    tile: usize,
) -> Result<Tensor> {
    let (_, h, w) = lq.dims3()?;
    if tile == 0 || h % tile != 0 || w % tile != 0 {
        return Err(Error::dim(format!(
            "{h}x{w} image is not a whole number of {tile}x{tile} tiles"
        )));
    }
    let r = config.task.upscale();
    let (oh, ow) = (h * r, w * r);
    let mut out = vec![0.0; oh * ow];
    for ty in (0..h).step_by(tile) {
        for tx in (0..w).step_by(tile) {
            let y = forward(
                &crop(lq, ty, tx, tile)?,
                &crop(prior, ty, tx, tile)?,
                params,
                config,
            )?;
            let side = tile * r;
            for (i, row) in y.data().chunks(side).enumerate() {
                let start = (ty * r + i) * ow + tx * r;
                out[start..start + side].copy_from_slice(row);
            }
        }
    }
    Tensor::new(&[1, oh, ow], out)
}

fn input_reference(s: &Sample) -> Result<Tensor> {
    let (_, h, w) = s.clean.dims3()?;
    let lq = if s.degraded.shape() == s.clean.shape() {
        s.degraded.clone()
    } else {
        bicubic_resize(&s.degraded, h, w)?
    };
    Ok(lq.map(|v| v.clamp(0.0, 1.0)))
}

pub fn score(id: &str, pred: &Tensor, input: &Tensor, clean: &Tensor) -> Result<ImageScore> {
    Ok(ImageScore {
        id: id.to_string(),
        psnr_db: psnr(pred, clean, PEAK)?,
        ssim: ssim(pred, clean)?,
        input_psnr_db: psnr(input, clean, PEAK)?,
        input_ssim: ssim(input, clean)?,
    })
}

/// Scores the model on the test split. Predictions are clamped to `[0, 1]`.
pub fn evaluate(
    params: &ModelParams,
    config: &ModelConfig,
    data: &Dataset,
    tile: usize,
) -> Result<EvalReport> {
    let test: Vec<&Sample> = data.split(Split::Test).collect();
    let images = test
        .par_iter()
        .map(|s| {
            let pred = restore(&s.degraded, prior_of(s)?, params, config, tile)?
                .map(|v| v.clamp(0.0, 1.0));
            score(&s.id, &pred, &input_reference(s)?, &s.clean)
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_images(images)
}
