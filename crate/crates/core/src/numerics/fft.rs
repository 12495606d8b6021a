//! Radix-2 complex FFT and the packed half-spectrum real transform.
//!
//! A real signal of even length `n` is transformed through a complex FFT of
//! length `n/2` (even samples in the real part, odd samples in the imaginary
//! part) followed by a split step that separates the two interleaved
//! spectra. Only bins `0..=n/2` are kept; the rest follow from
//! `X[m] = conj(X[n - m])`.
//!
//! Transforms are unnormalised in the forward direction and scaled by `1/n`
//! in the inverse direction.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

/// Tolerance used when checking that the DC and Nyquist bins are real.
const EDGE_IMAG_TOL: f64 = 1e-10;

/// Half spectrum of a batch of real rows, stored as two real planes.
#[derive(Clone, Debug, PartialEq)]
pub struct PackedSpectrum {
    n: usize,
    real: Tensor,
    imag: Tensor,
}

impl PackedSpectrum {
    /// Builds a spectrum for signals of length `n` from `[channels × bins]`
    /// real and imaginary planes, with `bins == n/2 + 1`.
    pub fn new(n: usize, real: Tensor, imag: Tensor) -> Result<Self> {
        let (c, bins) = real.dims2()?;
        real.expect_same_shape(&imag)?;
        if n < 2 || !n.is_multiple_of(2) || bins != n / 2 + 1 {
            return Err(Error::dim(format!(
                "{c}x{bins} spectrum does not describe real signals of length {n}"
            )));
        }
        Ok(Self { n, real, imag })
    }

    pub fn signal_len(&self) -> usize {
        self.n
    }

    pub fn bins(&self) -> usize {
        self.n / 2 + 1
    }

    pub fn channels(&self) -> usize {
        self.real.shape()[0]
    }

    pub fn real_part(&self) -> &Tensor {
        &self.real
    }

    pub fn imag_part(&self) -> &Tensor {
        &self.imag
    }

    pub fn into_parts(self) -> (Tensor, Tensor) {
        (self.real, self.imag)
    }

    /// Weighted spectral energy, `(1/n) Σ_m w_m |X[m]|²` with weight 1 on the
    /// DC and Nyquist bins and 2 on every interior bin. Equals `Σ x²` for the
    /// rows the spectrum came from.
    pub fn energy(&self) -> f64 {
        let bins = self.bins();
        let mut total = 0.0;
        for c in 0..self.channels() {
            for m in 0..bins {
                let re = self.real.data()[c * bins + m];
                let im = self.imag.data()[c * bins + m];
                let w = if m == 0 || m == bins - 1 { 1.0 } else { 2.0 };
                total += w * (re * re + im * im);
            }
        }
        total / self.n as f64
    }
}

pub fn is_power_of_two(n: usize) -> bool {
    n != 0 && n & (n - 1) == 0
}

fn check_len(n: usize) -> Result<()> {
    if n < 2 || !is_power_of_two(n) {
        return Err(Error::Sizing(format!(
            "transform length must be a power of two >= 2, got {n}"
        )));
    }
    Ok(())
}

/// Twiddle `exp(sign · 2πi · k / n)`, evaluated directly rather than by
/// recurrence so large transforms keep full accuracy.
fn twiddle(k: usize, n: usize, sign: f64) -> Complex64 {
    let angle = sign * 2.0 * PI * (k as f64) / (n as f64);
    Complex64::new(angle.cos(), angle.sin())
}

/// In-place iterative radix-2 decimation-in-time FFT. `inverse` flips the
/// twiddle sign but does not rescale.
pub fn fft_in_place(buf: &mut [Complex64], inverse: bool) -> Result<()> {
    let n = buf.len();
    if n == 1 {
        return Ok(());
    }
    check_len(n)?;
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if i < j {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let table: Vec<Complex64> = (0..n / 2).map(|k| twiddle(k, n, sign)).collect();
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let stride = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = table[k * stride];
                let a = buf[start + k];
                let b = buf[start + k + half] * w;
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
    Ok(())
}

/// Packed real FFT of one row. Returns `(real, imag)` of length `n/2 + 1`.
pub fn rfft_row(x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = x.len();
    check_len(n)?;
    let half = n / 2;
    let mut z: Vec<Complex64> = (0..half)
        .map(|k| Complex64::new(x[2 * k], x[2 * k + 1]))
        .collect();
    fft_in_place(&mut z, false)?;

    let mut re = vec![0.0; half + 1];
    let mut im = vec![0.0; half + 1];
    for m in 0..=half {
        let zm = z[m % half];
        let zc = z[(half - m) % half].conj();
        let even = (zm + zc) * 0.5;
        // (zm - zc) / 2i
        let diff = zm - zc;
        let odd = Complex64::new(diff.im * 0.5, -diff.re * 0.5);
        let xm = even + twiddle(m, n, -1.0) * odd;
        re[m] = xm.re;
        im[m] = xm.im;
    }
    im[0] = 0.0;
    im[half] = 0.0;
    Ok((re, im))
}

/// Inverse of [`rfft_row`]. The imaginary parts of the DC and Nyquist bins
/// are ignored, which makes this the inverse of the Hermitian extension of
/// the half spectrum.
pub fn irfft_row(re: &[f64], im: &[f64], n: usize) -> Result<Vec<f64>> {
    check_len(n)?;
    let half = n / 2;
    if re.len() != half + 1 || im.len() != half + 1 {
        return Err(Error::dim(format!(
            "{} bins cannot be inverted to length {n}",
            re.len()
        )));
    }
    let bin = |m: usize| {
        let imag = if m == 0 || m == half { 0.0 } else { im[m] };
        Complex64::new(re[m], imag)
    };
    let mut z: Vec<Complex64> = (0..half)
        .map(|m| {
            let xm = bin(m);
            let xc = bin(half - m).conj();
            let even = (xm + xc) * 0.5;
            let odd = (xm - xc) * twiddle(m, n, 1.0) * 0.5;
            // even + i·odd
            even + Complex64::new(-odd.im, odd.re)
        })
        .collect();
    fft_in_place(&mut z, true)?;
    let scale = 1.0 / half as f64;
    let mut out = vec![0.0; n];
    for (k, v) in z.iter().enumerate() {
        out[2 * k] = v.re * scale;
        out[2 * k + 1] = v.im * scale;
    }
    Ok(out)
}

/// Packed real FFT of every row of a `[channels × n]` tensor.
pub fn rfft(signal: &Tensor) -> Result<PackedSpectrum> {
    let (c, n) = signal.dims2()?;
    check_len(n)?;
    let bins = n / 2 + 1;
    let mut re = Vec::with_capacity(c * bins);
    let mut im = Vec::with_capacity(c * bins);
    for row in signal.data().chunks(n) {
        let (r, i) = rfft_row(row)?;
        re.extend(r);
        im.extend(i);
    }
    PackedSpectrum::new(
        n,
        Tensor::new(&[c, bins], re)?,
        Tensor::new(&[c, bins], im)?,
    )
}

/// Inverse packed FFT. Rejects spectra whose DC or Nyquist bin has a
/// non-zero imaginary part, since no real signal produces one.
pub fn irfft(spectrum: &PackedSpectrum, n: usize) -> Result<Tensor> {
    if spectrum.signal_len() != n {
        return Err(Error::dim(format!(
            "spectrum has {} bins, which does not match length {n}",
            spectrum.bins()
        )));
    }
    let bins = spectrum.bins();
    let scale = 1.0 + spectrum.real.max_abs().max(spectrum.imag.max_abs());
    for (c, row) in spectrum.imag.data().chunks(bins).enumerate() {
        for m in [0, bins - 1] {
            if row[m].abs() > EDGE_IMAG_TOL * scale {
                return Err(Error::usage(format!(
                    "channel {c}: bin {m} must be purely real for a real signal, imag = {}",
                    row[m]
                )));
            }
        }
    }
    irfft_hermitian(spectrum.real_part(), spectrum.imag_part(), n)
}

/// Inverse packed FFT of `[channels × bins]` planes that silently drops the
/// imaginary parts of the DC and Nyquist bins (the projection onto spectra
/// of real signals).
pub fn irfft_hermitian(real: &Tensor, imag: &Tensor, n: usize) -> Result<Tensor> {
    let (c, bins) = real.dims2()?;
    real.expect_same_shape(imag)?;
    check_len(n)?;
    if bins != n / 2 + 1 {
        return Err(Error::dim(format!(
            "{bins} bins cannot be inverted to length {n}"
        )));
    }
    let mut out = Vec::with_capacity(c * n);
    for (re, im) in real.data().chunks(bins).zip(imag.data().chunks(bins)) {
        out.extend(irfft_row(re, im, n)?);
    }
    Tensor::new(&[c, n], out)
}

/// Vector-Jacobian product of the packed forward transform: given upstream
/// gradients on the real and imaginary planes, returns the gradient on the
/// `[channels × n]` signal.
pub fn rfft_adjoint(grad_re: &Tensor, grad_im: &Tensor, n: usize) -> Result<Tensor> {
    let (c, bins) = grad_re.dims2()?;
    // grad_x[k] = Σ_m gr[m]cos(2πkm/n) − gi[m]sin(2πkm/n)
    //          = n · irfft(G with interior bins halved)
    let mut re = grad_re.data().to_vec();
    let mut im = grad_im.data().to_vec();
    for ch in 0..c {
        for m in 1..bins - 1 {
            re[ch * bins + m] *= 0.5;
            im[ch * bins + m] *= 0.5;
        }
    }
    let x = irfft_hermitian(
        &Tensor::new(&[c, bins], re)?,
        &Tensor::new(&[c, bins], im)?,
        n,
    )?;
    Ok(x.scale(n as f64))
}

/// Vector-Jacobian product of [`irfft_hermitian`]: maps a gradient on the
/// `[channels × n]` output back to the real and imaginary planes.
pub fn irfft_adjoint(grad_out: &Tensor) -> Result<(Tensor, Tensor)> {
    let spec = rfft(grad_out)?;
    let n = spec.signal_len();
    let bins = spec.bins();
    let (mut re, mut im) = spec.into_parts();
    let inv = 1.0 / n as f64;
    for row in re.data_mut().chunks_mut(bins) {
        for (m, v) in row.iter_mut().enumerate() {
            *v *= if m == 0 || m == bins - 1 {
                inv
            } else {
                2.0 * inv
            };
        }
    }
    for row in im.data_mut().chunks_mut(bins) {
        for (m, v) in row.iter_mut().enumerate() {
            *v *= if m == 0 || m == bins - 1 {
                0.0
            } else {
                2.0 * inv
            };
        }
    }
    Ok((re, im))
}
