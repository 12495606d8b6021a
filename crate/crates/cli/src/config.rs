//! Flat `key=value` run configuration. Every key has a default; a config
//! file may override any of them and command-line flags override the file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use lrformer_core::model::{parse_scale_mode, ModelConfig, Variant};
use lrformer_core::pipeline::{Degradation, PriorSettings, SynthConfig, TrainConfig};
use lrformer_core::{Error, Result};

pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key {
        name,
        default,
        help,
    }
}

pub const KEYS: &[Key] = &[
    key(
        "run_dir",
        "run",
        "Directory receiving every artifact of the run",
    ),
    key(
        "seed",
        "0",
        "Base seed for data, priors, initialisation and batches",
    ),
    // synth
    key("train_count", "16", "Training images to synthesise"),
    key("test_count", "4", "Test images to synthesise"),
    key("side", "64", "Phantom side length in pixels"),
    key(
        "degradation",
        "noise-d0.25",
        "noise-d<dose>, bicubic-x<2|4>, bias-s<strength> or block-s<fraction>",
    ),
    // prior
    key("samples", "4", "Monte-Carlo passes per prior (T)"),
    key("alpha", "0.5", "Weight of the consistency map"),
    key("beta", "0.5", "Weight of the discrepancy map"),
    key("dropout", "0.1", "Dropout rate of the toy segmenter"),
    key(
        "segmenter_channels",
        "8",
        "Score channels of the toy segmenter",
    ),
    // model
    key("groups", "2", "Attention groups (N)"),
    key("blocks", "2", "Blocks per group (M)"),
    key("channels", "16", "Feature channels (C)"),
    key("heads", "1", "Attention heads"),
    key(
        "softmax_scale",
        "inv-sqrt-dim",
        "Attention temperature: inv-sqrt-dim or unit",
    ),
    key("variant", "full", "baseline, prior, gfca-no-am or full"),
    // train
    key("lr_initial", "2e-4", "Initial and restart learning rate"),
    key(
        "lr_final",
        "1e-6",
        "Learning rate at the end of each cosine cycle",
    ),
    key("beta1", "0.9", "Adam first-moment decay"),
    key("beta2", "0.99", "Adam second-moment decay"),
    key("adam_eps", "1e-8", "Adam denominator epsilon"),
    key("batch", "4", "Patches per step"),
    key("steps", "2000", "Optimiser steps"),
    key(
        "patch",
        "16",
        "Training patch and evaluation tile side (power of two)",
    ),
    key(
        "restart_period",
        "0",
        "Steps per cosine cycle; 0 means one cycle over all steps",
    ),
    // eval
    key(
        "checkpoint",
        "",
        "Checkpoint to evaluate; empty means <run_dir>/checkpoint.lrt",
    ),
    // ablate
    key("ablate_study", "both", "components, samples or both"),
    key(
        "ablate_variants",
        "baseline,prior,gfca-no-am,full",
        "Variants of the component study",
    ),
    key(
        "ablate_samples",
        "2,4,6,8",
        "Prior sample counts of the sweep",
    ),
    // bench
    key(
        "bench_grid",
        "64,128,256,512,1024,2048,4096",
        "Token sizes of the cost curve",
    ),
    key(
        "bench_measure",
        "false",
        "Also time both attention forwards at every grid point",
    ),
    key(
        "bench_channels",
        "16",
        "Channel width of the timed forwards",
    ),
    key(
        "bench_repeats",
        "5",
        "Timed repetitions per forward (median reported)",
    ),
];

pub fn lookup(name: &str) -> Option<&'static Key> {
    KEYS.iter().find(|k| k.name == name)
}

/// Parses `key=value` lines; `#` starts a comment. Unknown keys and
/// duplicates are rejected.
pub fn parse_file_text(text: &str, origin: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Usage(format!(
                "{origin}:{}: expected key=value, got '{line}'",
                i + 1
            ))
        })?;
        let k = k.trim();
        if lookup(k).is_none() {
            return Err(Error::Usage(format!(
                "{origin}:{}: unknown key '{k}'",
                i + 1
            )));
        }
        if out.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Usage(format!(
                "{origin}:{}: duplicate key '{k}'",
                i + 1
            )));
        }
    }
    Ok(out)
}

pub fn read_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => {
            Error::MissingInput(format!("config file {} not found", path.display()))
        }
        _ => Error::Io(e),
    })?;
    parse_file_text(&text, &path.display().to_string())
}

/// Fully resolved configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
    pub run_dir: PathBuf,
    pub seed: u64,
    pub synth: SynthConfig,
    pub prior: PriorSettings,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub checkpoint: PathBuf,
    pub ablate_components: bool,
    pub ablate_samples: bool,
    pub ablate_variants: Vec<Variant>,
    pub ablate_sweep: Vec<usize>,
    pub bench_grid: Vec<usize>,
    pub bench_measure: bool,
    pub bench_channels: usize,
    pub bench_repeats: usize,
}

fn get<T: FromStr>(values: &BTreeMap<String, String>, name: &str) -> Result<T> {
    let raw = &values[name];
    raw.parse()
        .map_err(|_| Error::Usage(format!("invalid value '{raw}' for '{name}'")))
}

fn list<T: FromStr>(values: &BTreeMap<String, String>, name: &str) -> Result<Vec<T>> {
    values[name]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Usage(format!("invalid entry '{s}' in '{name}'")))
        })
        .collect()
}

impl RunConfig {
    /// Layers `overrides` (later wins) over the defaults and validates.
    pub fn resolve(layers: &[BTreeMap<String, String>]) -> Result<Self> {
        let mut values: BTreeMap<String, String> = KEYS
            .iter()
            .map(|k| (k.name.to_string(), k.default.to_string()))
            .collect();
        for layer in layers {
            for (k, v) in layer {
                if lookup(k).is_none() {
                    return Err(Error::Usage(format!("unknown key '{k}'")));
                }
                values.insert(k.clone(), v.clone());
            }
        }
        let seed: u64 = get(&values, "seed")?;
        let run_dir = PathBuf::from(&values["run_dir"]);
        let degradation: Degradation = values["degradation"].parse()?;
        let synth = SynthConfig {
            train_count: get(&values, "train_count")?,
            test_count: get(&values, "test_count")?,
            side: get(&values, "side")?,
            degradation,
            seed,
        };
        let prior = PriorSettings {
            samples: get(&values, "samples")?,
            alpha: get(&values, "alpha")?,
            beta: get(&values, "beta")?,
            dropout: get(&values, "dropout")?,
            channels: get(&values, "segmenter_channels")?,
            seed,
        };
        if prior.samples < 2 {
            return Err(Error::Usage(format!(
                "samples must be >= 2, got {}",
                prior.samples
            )));
        }
        let model = ModelConfig {
            groups: get(&values, "groups")?,
            blocks_per_group: get(&values, "blocks")?,
            channels: get(&values, "channels")?,
            task: degradation.task(),
            heads: get(&values, "heads")?,
            scale: parse_scale_mode(&values["softmax_scale"])?,
            variant: values["variant"].parse()?,
        };
        model.validate()?;
        let restart: usize = get(&values, "restart_period")?;
        let train = TrainConfig {
            lr_initial: get(&values, "lr_initial")?,
            lr_final: get(&values, "lr_final")?,
            beta1: get(&values, "beta1")?,
            beta2: get(&values, "beta2")?,
            eps: get(&values, "adam_eps")?,
            batch: get(&values, "batch")?,
            steps: get(&values, "steps")?,
            patch: get(&values, "patch")?,
            restart_period: (restart > 0).then_some(restart),
            seed,
        };
        train.validate()?;
        let checkpoint = match values["checkpoint"].as_str() {
            "" => run_dir.join("checkpoint.lrt"),
            p => PathBuf::from(p),
        };
        let (ablate_components, ablate_samples) = match values["ablate_study"].as_str() {
            "both" => (true, true),
            "components" => (true, false),
            "samples" => (false, true),
            s => {
                return Err(Error::Usage(format!(
                    "ablate_study must be components, samples or both, got '{s}'"
                )))
            }
        };
        let cfg = Self {
            run_dir,
            seed,
            synth,
            prior,
            model,
            train,
            checkpoint,
            ablate_components,
            ablate_samples,
            ablate_variants: list(&values, "ablate_variants")?,
            ablate_sweep: list(&values, "ablate_samples")?,
            bench_grid: list(&values, "bench_grid")?,
            bench_measure: get(&values, "bench_measure")?,
            bench_channels: get(&values, "bench_channels")?,
            bench_repeats: get(&values, "bench_repeats")?,
            values,
        };
        Ok(cfg)
    }

    pub fn data_dir(&self) -> PathBuf {
        self.run_dir.join("data")
    }

    /// Every key with its resolved value, in key order.
    pub fn snapshot(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.values {
            s.push_str(&format!("{k}={v}\n"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let c = RunConfig::resolve(&[]).unwrap();
        assert_eq!(c.prior.samples, 4);
        assert_eq!(c.train.lr_initial, 2e-4);
        assert_eq!(c.train.beta2, 0.99);
        assert_eq!(c.ablate_sweep, vec![2, 4, 6, 8]);
        assert_eq!(c.ablate_variants.len(), 4);
    }

    #[test]
    fn unknown_and_malformed_keys_rejected() {
        assert!(parse_file_text("stpes=3\n", "x").is_err());
        assert!(parse_file_text("steps 3\n", "x").is_err());
        assert!(parse_file_text("steps=3\nsteps=4\n", "x").is_err());
        let ok = parse_file_text("# comment\nsteps = 3 # trailing\n", "x").unwrap();
        assert_eq!(ok["steps"], "3");
    }

    #[test]
    fn later_layers_win() {
        let a = parse_file_text("steps=3", "a").unwrap();
        let b = parse_file_text("steps=5", "b").unwrap();
        assert_eq!(RunConfig::resolve(&[a, b]).unwrap().train.steps, 5);
    }
}
