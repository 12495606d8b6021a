//! Dense tensors, real FFT, neural primitives and reverse-mode differentiation.

pub mod autodiff;
pub mod fft;
pub mod gradcheck;
pub mod nn;
pub mod tensor;
