use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::FeatureVector;
use crate::audio::AudioClip;
use crate::error::{Error, Result};

/// Frame-level MFCC parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MfccConfig {
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub n_filters: usize,
    pub n_coeffs: usize,
    pub pre_emphasis: f64,
    pub f_min: f64,
    /// Upper filterbank edge; Nyquist when unset.
    pub f_max: Option<f64>,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            frame_ms: 25.0,
            hop_ms: 10.0,
            n_filters: 26,
            n_coeffs: 13,
            pre_emphasis: 0.97,
            f_min: 0.0,
            f_max: None,
        }
    }
}

impl MfccConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.frame_ms > 0.0 && self.hop_ms > 0.0) {
            return Err(Error::invalid("MFCC frame and hop must be positive"));
        }
        if self.n_filters == 0 || self.n_coeffs == 0 || self.n_coeffs > self.n_filters {
            return Err(Error::invalid("MFCC needs 1 <= n_coeffs <= n_filters"));
        }
        if !(0.0..1.0).contains(&self.pre_emphasis) {
            return Err(Error::invalid("pre-emphasis must lie in [0, 1)"));
        }
        Ok(())
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filters over the `n_fft / 2 + 1` one-sided bins,
/// one row per filter.
pub fn mel_filterbank(n_filters: usize, n_fft: usize, sample_rate: f64, f_min: f64, f_max: f64) -> Vec<Vec<f64>> {
    let n_bins = n_fft / 2 + 1;
    let (lo, hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    let edges: Vec<f64> = (0..n_filters + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_filters + 1) as f64))
        .collect();
    (0..n_filters)
        .map(|m| {
            let (left, centre, right) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * sample_rate / n_fft as f64;
                    if f <= left || f >= right {
                        0.0
                    } else if f <= centre {
                        (f - left) / (centre - left)
                    } else {
                        (right - f) / (right - centre)
                    }
                })
                .collect()
        })
        .collect()
}

pub fn mfcc_feature_names(n_coeffs: usize) -> Vec<String> {
    (0..n_coeffs)
        .flat_map(|i| [format!("mfcc{i}_mean"), format!("mfcc{i}_std")])
        .collect()
}

/// Frame-wise MFCCs (pre-emphasis, Hamming window, mel filterbank on the
/// power spectrum, log, orthonormal DCT-II) summarized by the mean and
/// standard deviation of each coefficient across frames.
pub fn extract_mfcc_features(segment: &AudioClip, config: &MfccConfig) -> Result<FeatureVector> {
    config.validate()?;
    let rate = segment.sample_rate as f64;
    let frame_len = (rate * config.frame_ms / 1000.0).round() as usize;
    let hop = ((rate * config.hop_ms / 1000.0).round() as usize).max(1);
    if frame_len < 2 || segment.len() < frame_len {
        return Err(Error::SignalTooShort(format!(
            "{} samples cannot hold one {frame_len}-sample MFCC frame",
            segment.len()
        )));
    }
    let n_fft = frame_len.next_power_of_two();
    let f_max = config.f_max.unwrap_or(rate / 2.0).min(rate / 2.0);
    let filters = mel_filterbank(config.n_filters, n_fft, rate, config.f_min, f_max);

    let x = &segment.samples;
    let emphasized: Vec<f64> = std::iter::once(x[0])
        .chain(x.windows(2).map(|w| w[1] - config.pre_emphasis * w[0]))
        .collect();
    let window: Vec<f64> = (0..frame_len)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (frame_len - 1) as f64).cos())
        .collect();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let n_frames = (emphasized.len() - frame_len) / hop + 1;
    let nf = config.n_filters as f64;

    let mut coeffs = vec![Vec::with_capacity(n_frames); config.n_coeffs];
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    let mut log_mel = vec![0.0; config.n_filters];
    for t in 0..n_frames {
        buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
        for n in 0..frame_len {
            buf[n].re = emphasized[t * hop + n] * window[n];
        }
        fft.process(&mut buf);
        let power: Vec<f64> = buf[..n_fft / 2 + 1]
            .iter()
            .map(|c| c.norm_sqr() / n_fft as f64)
            .collect();
        for (out, filter) in log_mel.iter_mut().zip(&filters) {
            let e: f64 = filter.iter().zip(&power).map(|(w, p)| w * p).sum();
            *out = e.max(1e-10).ln();
        }
        for (i, c) in coeffs.iter_mut().enumerate() {
            let scale = if i == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
            let v: f64 = log_mel
                .iter()
                .enumerate()
                .map(|(m, l)| l * (PI * i as f64 * (m as f64 + 0.5) / nf).cos())
                .sum();
            c.push(scale * v);
        }
    }

    let values = coeffs
        .iter()
        .flat_map(|c| [crate::stats::mean(c), crate::stats::std_dev(c)])
        .collect();
    Ok(FeatureVector {
        values,
        feature_names: mfcc_feature_names(config.n_coeffs),
        label: segment.label.clone(),
    })
}
