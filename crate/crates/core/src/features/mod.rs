//! Feature extraction: wavelet sub-band statistics, an MFCC baseline, PCA
//! reduction and z-score standardization, plus the feature CSV format.

mod dataset;
mod mfcc;
mod pca;
mod scale;

pub(crate) use dataset::format_float;
pub use dataset::{read_feature_csv, write_feature_csv, Dataset, FeatureVector};
pub use mfcc::{extract_mfcc_features, mel_filterbank, mfcc_feature_names, MfccConfig};
pub use pca::{pca_fit, pca_fit_rows, pca_transform, PcaModel};
pub use scale::Standardizer;

use serde::{Deserialize, Serialize};

use crate::audio::{resample_to_length, AudioClip};
use crate::error::{Error, Result};
use crate::spectral::power_spectrum;
use crate::stats;
use crate::wavelet::{band_names, denoise, wavedec, ThresholdMode, WaveletSpec};

/// Which representation of a segment feeds the classifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    /// Resampled time-domain samples, no feature extraction.
    Raw,
    Mfcc,
    Dwt,
}

impl FeatureKind {
    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Raw => "raw",
            FeatureKind::Mfcc => "mfcc",
            FeatureKind::Dwt => "dwt",
        }
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" | "none" => Ok(FeatureKind::Raw),
            "mfcc" => Ok(FeatureKind::Mfcc),
            "dwt" => Ok(FeatureKind::Dwt),
            other => Err(Error::invalid(format!(
                "unknown feature variant `{other}` (expected dwt, mfcc or raw)"
            ))),
        }
    }
}

impl std::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.name())
    }
}

pub fn band_mean(band: &[f64]) -> f64 {
    stats::mean(band)
}

/// Population standard deviation.
pub fn band_std(band: &[f64]) -> f64 {
    stats::std_dev(band)
}

/// Shannon entropy `-sum p ln p` of the energy distribution `p_i = x_i^2 /
/// sum x^2`. Zero coefficients contribute nothing; an all-zero band has
/// entropy 0.
pub fn band_entropy(band: &[f64]) -> f64 {
    let total = stats::energy(band);
    if total == 0.0 {
        return 0.0;
    }
    -band
        .iter()
        .map(|x| x * x / total)
        .filter(|&p| p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
}

/// Mean of the one-sided power spectrum `|FFT|^2 / N`.
pub fn band_psd_summary(band: &[f64]) -> f64 {
    stats::mean(&power_spectrum(band))
}

/// Feature names in output order for a `levels`-level decomposition:
/// for each band `L_J, H_J, ..., H_1` the triple `<band>_mean_abs`,
/// `<band>_std`, `<band>_entropy`, then the whole-signal `median`, `std`
/// and `psd_mean`.
pub fn dwt_feature_names(levels: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(3 * (levels + 1) + 3);
    for band in band_names(levels) {
        names.push(format!("{band}_mean_abs"));
        names.push(format!("{band}_std"));
        names.push(format!("{band}_entropy"));
    }
    names.extend(["median", "std", "psd_mean"].map(String::from));
    names
}

/// Sub-band statistics of an already denoised signal.
pub fn dwt_band_features(denoised: &[f64], spec: &WaveletSpec) -> Result<Vec<f64>> {
    let decomp = wavedec(denoised, spec)?;
    let mut values = Vec::with_capacity(3 * (spec.levels + 1) + 3);
    for band in decomp.bands() {
        let abs: Vec<f64> = band.iter().map(|c| c.abs()).collect();
        values.push(stats::mean(&abs));
        values.push(band_std(band));
        values.push(band_entropy(band));
    }
    values.push(stats::median(denoised));
    values.push(band_std(denoised));
    values.push(band_psd_summary(denoised));
    Ok(values)
}

/// Denoise (soft threshold, factor `k`), decompose and summarize a segment.
/// A level-4 spec yields 18 features.
pub fn extract_dwt_features(segment: &AudioClip, spec: &WaveletSpec, k: f64) -> Result<FeatureVector> {
    let denoised = denoise(&segment.samples, spec, k, ThresholdMode::Soft)?;
    Ok(FeatureVector {
        values: dwt_band_features(&denoised, spec)?,
        feature_names: dwt_feature_names(spec.levels),
        label: segment.label.clone(),
    })
}

pub fn raw_feature_names(len: usize) -> Vec<String> {
    (0..len).map(|i| format!("s{i}")).collect()
}

/// Time-domain samples resampled to a fixed length.
pub fn extract_raw_features(segment: &AudioClip, len: usize) -> Result<FeatureVector> {
    if segment.is_empty() || len == 0 {
        return Err(Error::invalid("raw features need a non-empty segment and length"));
    }
    Ok(FeatureVector {
        values: resample_to_length(&segment.samples, len),
        feature_names: raw_feature_names(len),
        label: segment.label.clone(),
    })
}
