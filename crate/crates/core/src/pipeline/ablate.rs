//! Component ablation and prior-sample sweep. Every row trains from the
//! same seeds and is scored on the same test split.

use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{count_parameters, ModelConfig, Variant};
use crate::pipeline::dataset::{Dataset, PriorSettings};
use crate::pipeline::evaluate::{evaluate, fmt_db, EvalReport};
use crate::pipeline::optim::TrainConfig;
use crate::pipeline::train::train;

pub const ABLATION_HEADER: &str =
    "study,variant,samples,parameters,psnr_db,ssim,input_psnr_db,input_ssim";
pub const SAMPLE_SWEEP: [usize; 4] = [2, 4, 6, 8];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Study {
    Components,
    Samples,
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Study::Components => "components",
            Study::Samples => "samples",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub study: Study,
    pub variant: Variant,
    pub samples: usize,
    pub parameters: usize,
    pub report: EvalReport,
}

fn run_one(
    study: Study,
    model: &ModelConfig,
    train_cfg: &TrainConfig,
    data: &Dataset,
    samples: usize,
    tile: usize,
) -> Result<AblationRow> {
    let outcome = train(model, train_cfg, data)?;
    let report = evaluate(&outcome.params, model, data, tile)?;
    Ok(AblationRow {
        study,
        variant: model.variant,
        samples,
        parameters: count_parameters(&outcome.params),
        report,
    })
}

/// One row per variant; `model.variant` is overridden.
pub fn ablate_components(
    model: &ModelConfig,
    train_cfg: &TrainConfig,
    data: &Dataset,
    prior: &PriorSettings,
    variants: &[Variant],
) -> Result<Vec<AblationRow>> {
    if variants.is_empty() {
        return Err(Error::usage("no variants to ablate"));
    }
    let mut data = data.clone();
    data.compute_priors(prior)?;
    variants
        .iter()
        .map(|&variant| {
            let cfg = ModelConfig { variant, ..*model };
            run_one(
                Study::Components,
                &cfg,
                train_cfg,
                &data,
                prior.samples,
                train_cfg.patch,
            )
        })
        .collect()
}

/// One row per prior sample count, all with the same model configuration.
pub fn ablate_samples(
    model: &ModelConfig,
    train_cfg: &TrainConfig,
    data: &Dataset,
    prior: &PriorSettings,
    sweep: &[usize],
) -> Result<Vec<AblationRow>> {
    if sweep.is_empty() {
        return Err(Error::usage("empty sample sweep"));
    }
    sweep
        .iter()
        .map(|&samples| {
            let mut d = data.clone();
            d.compute_priors(&PriorSettings { samples, ..*prior })?;
            run_one(
                Study::Samples,
                model,
                train_cfg,
                &d,
                samples,
                train_cfg.patch,
            )
        })
        .collect()
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = format!("{ABLATION_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.study,
            r.variant,
            r.samples,
            r.parameters,
            fmt_db(r.report.psnr_db),
            r.report.ssim,
            fmt_db(r.report.input_psnr_db),
            r.report.input_ssim
        );
    }
    s
}

pub fn write_ablation(path: &Path, rows: &[AblationRow]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, ablation_csv(rows))?;
    Ok(())
}
