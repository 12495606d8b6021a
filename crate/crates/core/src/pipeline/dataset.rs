//! Synthetic dataset: generation, on-disk layout and prior caching.
//!
//! ```text
//! <root>/manifest.txt                 "id spec seed" per line
//! <root>/clean/<id>.lrt               (+ <id>.pgm)
//! <root>/degraded/<spec-id>/<id>.lrt  (+ <id>.pgm)
//! <root>/priors/<spec-id>/<id>.lrt
//! ```
//!
//! Image ids carry their split: `train-0003`, `test-0001`.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::container::{write_pgm16, Container, EXTENSION};
use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;
use crate::pipeline::degrade::{degrade, Degradation, DegradationSpec};
use crate::pipeline::phantom::{image_seed, phantom, DEFAULT_SIDE};
use crate::prior::{
    produce_prior, toy_segmenter, PriorRecord, DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_DROPOUT,
    DEFAULT_SAMPLES, DEFAULT_SEGMENTER_CHANNELS,
};

pub const MANIFEST: &str = "manifest.txt";
/// XOR-ed into an image seed to derive its degradation seed.
pub const DEGRADE_SALT: u64 = 0xD5A6_1E55_0000_0001;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn prefix(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    fn of(id: &str) -> Result<Split> {
        if id.starts_with("train-") {
            Ok(Split::Train)
        } else if id.starts_with("test-") {
            Ok(Split::Test)
        } else {
            Err(Error::Format(format!(
                "image id '{id}' has no train-/test- prefix"
            )))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthConfig {
    pub train_count: usize,
    pub test_count: usize,
    pub side: usize,
    pub degradation: Degradation,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            train_count: 16,
            test_count: 4,
            side: DEFAULT_SIDE,
            degradation: Degradation::Noise {
                dose: crate::pipeline::degrade::DEFAULT_DOSE,
            },
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PriorSettings {
    pub samples: usize,
    pub alpha: f64,
    pub beta: f64,
    pub dropout: f64,
    pub channels: usize,
    pub seed: u64,
}

impl Default for PriorSettings {
    fn default() -> Self {
        Self {
            samples: DEFAULT_SAMPLES,
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            dropout: DEFAULT_DROPOUT,
            channels: DEFAULT_SEGMENTER_CHANNELS,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub split: Split,
    /// Per-image seed recorded in the manifest.
    pub seed: u64,
    pub clean: Tensor,
    pub degraded: Tensor,
    pub prior: Option<Tensor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub degradation: Degradation,
    pub samples: Vec<Sample>,
}

fn image_file(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.{EXTENSION}"))
}

fn image_container(id: &str, kind: &str, image: &Tensor) -> Container {
    let mut c = Container::new().with_meta("kind", kind).with_meta("id", id);
    c.push("image", image.clone());
    c
}

fn read_image(path: &Path) -> Result<Tensor> {
    Container::read(path)?
        .tensor("image")
        .cloned()
        .ok_or_else(|| Error::Format(format!("{} holds no 'image' tensor", path.display())))
}

impl Dataset {
    /// Generates phantoms and degrades them; deterministic in `cfg`.
    pub fn synthesize(cfg: &SynthConfig) -> Result<Self> {
        cfg.degradation.validate()?;
        if cfg.train_count + cfg.test_count == 0 {
            return Err(Error::usage("dataset needs at least one image"));
        }
        let plan: Vec<(Split, usize)> = (0..cfg.train_count)
            .map(|i| (Split::Train, i))
            .chain((0..cfg.test_count).map(|i| (Split::Test, i)))
            .collect();
        let samples = plan
            .par_iter()
            .enumerate()
            .map(|(k, &(split, i))| {
                let seed = image_seed(cfg.seed, k);
                let clean = phantom(cfg.side, seed)?;
                let spec = DegradationSpec::new(cfg.degradation, seed ^ DEGRADE_SALT)?;
                let degraded = degrade(&clean, &spec)?;
                Ok(Sample {
                    id: format!("{}-{i:04}", split.prefix()),
                    split,
                    seed,
                    clean,
                    degraded,
                    prior: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            degradation: cfg.degradation,
            samples,
        })
    }

    pub fn spec_id(&self) -> String {
        self.degradation.to_string()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    /// Runs the prior producer on every degraded image.
    pub fn compute_priors(&mut self, settings: &PriorSettings) -> Result<()> {
        let seg = toy_segmenter(settings.channels, settings.dropout)?;
        let priors = self
            .samples
            .par_iter()
            .map(|s| {
                let p = produce_prior(
                    &seg,
                    &s.degraded,
                    settings.samples,
                    settings.alpha,
                    settings.beta,
                    image_seed(settings.seed, s.seed as usize),
                )?;
                Ok(p.reliability)
            })
            .collect::<Result<Vec<_>>>()?;
        for (s, p) in self.samples.iter_mut().zip(priors) {
            s.prior = Some(p);
        }
        Ok(())
    }

    pub fn manifest_text(&self) -> String {
        let spec = self.spec_id();
        self.samples
            .iter()
            .map(|s| format!("{} {spec} {}\n", s.id, s.seed))
            .collect()
    }

    /// Writes manifest, clean and degraded images (containers plus 16-bit
    /// PGM copies).
    pub fn write(&self, root: &Path) -> Result<()> {
        let spec = self.spec_id();
        let clean_dir = root.join("clean");
        let deg_dir = root.join("degraded").join(&spec);
        fs::create_dir_all(&clean_dir)?;
        fs::create_dir_all(&deg_dir)?;
        for s in &self.samples {
            image_container(&s.id, "clean", &s.clean).write(&image_file(&clean_dir, &s.id))?;
            write_pgm16(&clean_dir.join(format!("{}.pgm", s.id)), &s.clean)?;
            image_container(&s.id, "degraded", &s.degraded).write(&image_file(&deg_dir, &s.id))?;
            write_pgm16(
                &deg_dir.join(format!("{}.pgm", s.id)),
                &s.degraded.map(|v| v.clamp(0.0, 1.0)),
            )?;
        }
        fs::write(root.join(MANIFEST), self.manifest_text())?;
        Ok(())
    }

    pub fn prior_dir(root: &Path, degradation: &Degradation) -> PathBuf {
        root.join("priors").join(degradation.to_string())
    }

    /// Writes one prior record per image. Fails if priors were not computed.
    pub fn write_priors(&self, root: &Path, settings: &PriorSettings) -> Result<usize> {
        let dir = Self::prior_dir(root, &self.degradation);
        fs::create_dir_all(&dir)?;
        for s in &self.samples {
            let u = s.prior.as_ref().ok_or_else(|| {
                Error::MissingInput(format!("no prior computed for image '{}'", s.id))
            })?;
            PriorRecord {
                id: s.id.clone(),
                samples: settings.samples,
                alpha: settings.alpha,
                beta: settings.beta,
                reliability: u.clone(),
            }
            .write(&image_file(&dir, &s.id))?;
        }
        Ok(self.samples.len())
    }

    /// Loads the manifest and images. Priors are not loaded.
    pub fn load(root: &Path) -> Result<Self> {
        let manifest_path = root.join(MANIFEST);
        let text = fs::read_to_string(&manifest_path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingInput(format!(
                "no dataset manifest at {}",
                manifest_path.display()
            )),
            _ => Error::Io(e),
        })?;
        let mut degradation = None;
        let mut samples = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || Error::Format(format!("manifest line {}: '{line}'", lineno + 1));
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [id, spec, seed] = fields[..] else {
                return Err(bad());
            };
            let d: Degradation = spec.parse().map_err(|_| bad())?;
            if *degradation.get_or_insert(d) != d {
                return Err(Error::Format("manifest mixes several degradations".into()));
            }
            let seed: u64 = seed.parse().map_err(|_| bad())?;
            let clean = read_image(&image_file(&root.join("clean"), id))?;
            let degraded = read_image(&image_file(&root.join("degraded").join(spec), id))?;
            samples.push(Sample {
                id: id.to_string(),
                split: Split::of(id)?,
                seed,
                clean,
                degraded,
                prior: None,
            });
        }
        let degradation = degradation.ok_or_else(|| {
            Error::MissingInput(format!("manifest {} is empty", manifest_path.display()))
        })?;
        Ok(Self {
            degradation,
            samples,
        })
    }

    /// Attaches cached priors; a missing entry is reported by image id.
    pub fn load_priors(&mut self, root: &Path) -> Result<()> {
        let dir = Self::prior_dir(root, &self.degradation);
        for s in &mut self.samples {
            let path = image_file(&dir, &s.id);
            if !path.exists() {
                return Err(Error::MissingInput(format!(
                    "no cached prior for image '{}' (expected {})",
                    s.id,
                    path.display()
                )));
            }
            let rec = PriorRecord::read(&path)?;
            if rec.reliability.shape() != s.degraded.shape() {
                return Err(Error::dim(format!(
                    "prior for '{}' does not match its image",
                    s.id
                )));
            }
            s.prior = Some(rec.reliability);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthesis_is_deterministic() {
        let cfg = SynthConfig {
            train_count: 2,
            test_count: 1,
            side: 16,
            ..SynthConfig::default()
        };
        let a = Dataset::synthesize(&cfg).unwrap();
        assert_eq!(a, Dataset::synthesize(&cfg).unwrap());
        assert_eq!(a.split(Split::Test).count(), 1);
        assert!(a.manifest_text().starts_with("train-0000 noise-d0.25 "));
    }

    #[test]
    fn sr_halves_extents() {
        let cfg = SynthConfig {
            train_count: 1,
            test_count: 0,
            side: 16,
            degradation: Degradation::BicubicDown { factor: 2 },
            seed: 1,
        };
        let d = Dataset::synthesize(&cfg).unwrap();
        assert_eq!(d.samples[0].degraded.shape(), &[1, 8, 8]);
    }
}
