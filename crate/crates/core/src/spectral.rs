//! Short-time Fourier analysis/synthesis and FFT helpers.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WindowKind {
    /// Periodic Hann, `0.5 - 0.5 cos(2πn/N)`.
    #[default]
    Hann,
}

impl WindowKind {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            WindowKind::Hann => (0..len)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
                .collect(),
        }
    }
}

/// STFT parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_len: 1024,
            hop: 256,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_len < 2 || !self.window_len.is_power_of_two() {
            return Err(Error::invalid(format!(
                "STFT window length must be a power of two >= 2, got {}",
                self.window_len
            )));
        }
        if self.hop == 0 || self.hop > self.window_len {
            return Err(Error::invalid(format!(
                "STFT hop must be in 1..={}, got {}",
                self.window_len, self.hop
            )));
        }
        Ok(())
    }
}

/// One-sided complex spectrogram; rows are frequency bins, columns frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub bins: DMatrix<Complex64>,
    pub window_len: usize,
    pub hop: usize,
    pub sample_rate: u32,
    pub window: WindowKind,
    /// Length of the signal before padding.
    pub original_len: usize,
    /// Reflect padding applied before the first sample.
    pub pad_left: usize,
}

impl Spectrogram {
    pub fn n_bins(&self) -> usize {
        self.bins.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.bins.ncols()
    }

    pub fn magnitude(&self) -> DMatrix<f64> {
        self.bins.map(|c| c.norm())
    }

    /// Unit phasors of every bin; zero-magnitude bins get phase 0.
    pub fn phase(&self) -> DMatrix<Complex64> {
        self.bins.map(|c| {
            let n = c.norm();
            if n > 0.0 {
                c / n
            } else {
                Complex64::new(1.0, 0.0)
            }
        })
    }

    /// Same metadata, new bins (must have the same shape).
    pub fn with_bins(&self, bins: DMatrix<Complex64>) -> Result<Self> {
        if bins.shape() != self.bins.shape() {
            return Err(Error::invalid(format!(
                "spectrogram shape {:?} does not match {:?}",
                bins.shape(),
                self.bins.shape()
            )));
        }
        Ok(Self { bins, ..self.clone() })
    }

    /// Centre frequency in Hz of bin `k`.
    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.window_len as f64
    }
}

fn reflect_index(i: isize, len: usize) -> usize {
    let n = len as isize;
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * (n - 1) - i;
    }
    i as usize
}

/// Forward STFT with a periodic Hann window.
///
/// The signal is reflect-padded by `window_len / 2` on each side and then
/// zero-padded on the right so that the last frame ends on the padded edge.
pub fn stft(clip: &AudioClip, window_len: usize, hop: usize) -> Result<Spectrogram> {
    let config = StftConfig { window_len, hop };
    config.validate()?;
    let len = clip.len();
    let pad = window_len / 2;
    if len <= pad {
        return Err(Error::SignalTooShort(format!(
            "{len} samples cannot be reflect-padded for a {window_len}-sample window"
        )));
    }

    let n_frames = len.div_ceil(hop) + 1;
    let padded_len = (n_frames - 1) * hop + window_len;
    let padded: Vec<f64> = (0..padded_len)
        .map(|i| {
            let src = i as isize - pad as isize;
            if src < len as isize + pad as isize {
                clip.samples[reflect_index(src, len)]
            } else {
                0.0
            }
        })
        .collect();

    let window = WindowKind::Hann.coefficients(window_len);
    let n_bins = window_len / 2 + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(window_len);
    let mut bins = DMatrix::<Complex64>::zeros(n_bins, n_frames);
    let mut buf = vec![Complex64::new(0.0, 0.0); window_len];
    for t in 0..n_frames {
        let start = t * hop;
        for (n, b) in buf.iter_mut().enumerate() {
            *b = Complex64::new(padded[start + n] * window[n], 0.0);
        }
        fft.process(&mut buf);
        for k in 0..n_bins {
            bins[(k, t)] = buf[k];
        }
    }

    Ok(Spectrogram {
        bins,
        window_len,
        hop,
        sample_rate: clip.sample_rate,
        window: WindowKind::Hann,
        original_len: len,
        pad_left: pad,
    })
}

/// Inverse STFT by weighted overlap-add, normalized by the summed squared
/// window so that `istft(stft(x)) == x` up to rounding.
pub fn istft(spec: &Spectrogram) -> Result<AudioClip> {
    let n = spec.window_len;
    if spec.hop == 0 || spec.hop > n {
        return Err(Error::invalid(format!(
            "hop {} is inconsistent with window length {n}",
            spec.hop
        )));
    }
    if spec.n_bins() != n / 2 + 1 {
        return Err(Error::invalid(format!(
            "{} bins do not match window length {n}",
            spec.n_bins()
        )));
    }
    let frames = spec.n_frames();
    let out_len = (frames.saturating_sub(1)) * spec.hop + n;
    if spec.pad_left + spec.original_len > out_len {
        return Err(Error::invalid("spectrogram is too short for its original length"));
    }

    let window = spec.window.coefficients(n);
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let mut acc = vec![0.0; out_len];
    let mut norm = vec![0.0; out_len];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for t in 0..frames {
        for (k, b) in buf.iter_mut().take(n / 2 + 1).enumerate() {
            *b = spec.bins[(k, t)];
        }
        for k in 1..n / 2 {
            buf[n - k] = spec.bins[(k, t)].conj();
        }
        ifft.process(&mut buf);
        let start = t * spec.hop;
        for (i, (b, w)) in buf.iter().zip(&window).enumerate() {
            acc[start + i] += b.re / n as f64 * w;
            norm[start + i] += w * w;
        }
    }

    let samples = (spec.pad_left..spec.pad_left + spec.original_len)
        .map(|i| if norm[i] > 1e-10 { acc[i] / norm[i] } else { 0.0 })
        .collect();
    Ok(AudioClip::new(samples, spec.sample_rate))
}

/// One-sided power spectrum `|FFT(x)|² / N`, length `N/2 + 1`.
pub fn power_spectrum(signal: &[f64]) -> Vec<f64> {
    let n = signal.len();
    if n == 0 {
        return Vec::new();
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut buf: Vec<Complex64> = signal.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft.process(&mut buf);
    buf[..n / 2 + 1].iter().map(|c| c.norm_sqr() / n as f64).collect()
}
