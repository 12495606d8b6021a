//! Data synthesis, training, evaluation and ablation.

pub mod ablate;
pub mod dataset;
pub mod degrade;
pub mod evaluate;
pub mod metrics;
pub mod optim;
pub mod phantom;
pub mod train;

pub use ablate::{ablate_components, ablate_samples, AblationRow, Study};
pub use dataset::{Dataset, PriorSettings, Sample, Split, SynthConfig};
pub use degrade::{degrade, ArtifactKind, Degradation, DegradationSpec};
pub use evaluate::{evaluate, EvalReport, ImageScore};
pub use metrics::{psnr, ssim};
pub use optim::{Adam, CosineRestarts, TrainConfig};
pub use train::{train, CurvePoint, TrainOutcome};
