//! Prior-guided image restoration with frequency-domain cross-attention.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`] holds the dense tensor type, the packed real FFT, neural
//!   primitives and a small reverse-mode differentiation tape.
//! * [`prior`] samples a stochastic segmenter several times and fuses the
//!   masks into consistency, discrepancy and reliability maps.
//! * [`gfca`] is the frequency cross-attention block that injects the
//!   reliability prior into image features.
//! * [`model`] assembles embedding, grouped attention blocks and decoders.
//! * [`pipeline`] generates synthetic data, trains, evaluates and runs the
//!   ablation sweeps.
//! * [`container`] is the binary tensor file format shared by every on-disk
//!   artifact.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

/// Declares a parameter struct generic over its leaf type together with
/// name-aware `map`, `visit` and `visit_mut`.
macro_rules! param_struct {
    ($(#[$m:meta])* $name:ident { $($field:ident),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name<T = $crate::numerics::tensor::Tensor> {
            $(pub $field: T,)+
        }

        impl<T> $name<T> {
            pub fn map<U>(&self, f: &mut impl FnMut(&str, &T) -> U) -> $name<U> {
                $name { $($field: f(stringify!($field), &self.$field),)+ }
            }

            pub fn visit<'a>(&'a self, f: &mut impl FnMut(&str, &'a T)) {
                $(f(stringify!($field), &self.$field);)+
            }

            pub fn visit_mut(&mut self, f: &mut impl FnMut(&str, &mut T)) {
                $(f(stringify!($field), &mut self.$field);)+
            }
        }
    };
}

pub mod container;
pub mod error;
pub mod gfca;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod prior;

pub use error::{Error, Result};
pub use gfca::{BranchPair, GfcaParams, ScaleMode};
pub use model::{ModelConfig, ModelParams, Task, Variant};
pub use numerics::autodiff::{DualGrad, Gradients, Graph, Var};
pub use numerics::fft::PackedSpectrum;
pub use numerics::tensor::Tensor;
pub use prior::{ReliablePrior, SegmentationSample, StochasticSegmenter, ToySegmenter};
