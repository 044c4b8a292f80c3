//! Discrete wavelet transform: Daubechies filter banks, multi-level
//! analysis/synthesis and threshold denoising.
//!
//! Analysis correlates the (extended) signal with the reconstruction
//! filters at even offsets:
//!
//! ```text
//! a[j] = sum_m lo[m] * z[2j + m]        d[j] = sum_m hi[m] * z[2j + m]
//! ```
//!
//! where `hi[m] = (-1)^m lo[F-1-m]`. With symmetric extension `z` is the
//! signal padded by `F-1` half-sample mirrored values on both sides and each
//! band has `ceil((N + F - 1) / 2)` coefficients. With periodization `z` wraps
//! around and each band has `N / 2` coefficients, making the transform an
//! orthogonal matrix.

mod filters;

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use filters::daubechies;

/// Wavelet family. Only the Daubechies set is provided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Wavelet {
    Daubechies(u8),
}

impl Wavelet {
    pub const DB4: Wavelet = Wavelet::Daubechies(4);

    pub fn filter_len(self) -> usize {
        match self {
            Wavelet::Daubechies(n) => 2 * n as usize,
        }
    }

    pub fn filter_bank(self) -> FilterBank {
        match self {
            Wavelet::Daubechies(n) => {
                let lo = daubechies(n).expect("validated wavelet order").to_vec();
                FilterBank::orthogonal(lo)
            }
        }
    }
}

impl fmt::Display for Wavelet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Wavelet::Daubechies(n) => write!(f, "db{n}"),
        }
    }
}

impl FromStr for Wavelet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let order = s
            .strip_prefix("db")
            .and_then(|n| n.parse::<u8>().ok())
            .filter(|n| daubechies(*n).is_some())
            .ok_or_else(|| Error::invalid(format!("unsupported wavelet `{s}` (expected db1..db8)")))?;
        Ok(Wavelet::Daubechies(order))
    }
}

impl TryFrom<String> for Wavelet {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Wavelet> for String {
    fn from(w: Wavelet) -> String {
        w.to_string()
    }
}

/// Two-channel orthogonal filter pair used for both analysis and synthesis.
#[derive(Debug, Clone)]
pub struct FilterBank {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl FilterBank {
    fn orthogonal(lo: Vec<f64>) -> Self {
        let f = lo.len();
        let hi = (0..f)
            .map(|k| if k % 2 == 0 { lo[f - 1 - k] } else { -lo[f - 1 - k] })
            .collect();
        Self { lo, hi }
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }
}

/// Boundary handling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Extension {
    /// Half-sample symmetric mirroring (`... x1 x0 | x0 x1 ...`).
    #[default]
    Symmetric,
    /// Circular wrap; requires an even length at every level.
    Periodization,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveletSpec {
    pub family: Wavelet,
    pub levels: usize,
    #[serde(default)]
    pub extension: Extension,
}

impl Default for WaveletSpec {
    fn default() -> Self {
        Self {
            family: Wavelet::DB4,
            levels: 4,
            extension: Extension::Symmetric,
        }
    }
}

impl WaveletSpec {
    pub fn new(family: Wavelet, levels: usize) -> Self {
        Self {
            family,
            levels,
            extension: Extension::Symmetric,
        }
    }

    pub fn periodized(mut self) -> Self {
        self.extension = Extension::Periodization;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::invalid("wavelet levels must be at least 1"));
        }
        match self.family {
            Wavelet::Daubechies(n) if daubechies(n).is_none() => {
                Err(Error::invalid(format!("unsupported wavelet db{n}")))
            }
            _ => Ok(()),
        }
    }

    /// Number of coefficients per band produced from an `n`-sample input.
    pub fn band_len(&self, n: usize) -> usize {
        match self.extension {
            Extension::Symmetric => (n + self.family.filter_len() - 1).div_ceil(2),
            Extension::Periodization => n / 2,
        }
    }
}

/// Sub-band label and its nominal frequency range.
#[derive(Debug, Clone, PartialEq)]
pub struct SubBand {
    pub name: String,
    pub low_hz: f64,
    pub high_hz: f64,
}

/// Multi-level decomposition, `approx` = L_J and `details` = [H_J, ..., H_1]
/// (coarsest first).
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletDecomposition {
    pub approx: Vec<f64>,
    pub details: Vec<Vec<f64>>,
    pub spec: WaveletSpec,
    pub original_length: usize,
    /// Input length at each level, finest first (`level_lengths[0]` is the
    /// original length).
    pub level_lengths: Vec<usize>,
}

impl WaveletDecomposition {
    pub fn levels(&self) -> usize {
        self.details.len()
    }

    /// All bands in storage order: `[L_J, H_J, ..., H_1]`.
    pub fn bands(&self) -> impl Iterator<Item = &[f64]> {
        std::iter::once(self.approx.as_slice()).chain(self.details.iter().map(Vec::as_slice))
    }

    /// Band names in storage order, e.g. `["L4", "H4", "H3", "H2", "H1"]`.
    pub fn band_names(&self) -> Vec<String> {
        band_names(self.levels())
    }

    /// The finest detail band, H1.
    pub fn finest_detail(&self) -> &[f64] {
        self.details.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Nominal frequency ranges in storage order. The labelling takes the
    /// sample rate as the ceiling of H1 and halves it per level, so 4160 Hz
    /// gives L4 0-260, H4 260-520, H3 520-1040, H2 1040-2080, H1 2080-4160.
    pub fn band_ranges(&self, sample_rate: f64) -> Vec<SubBand> {
        nominal_band_ranges(self.levels(), sample_rate)
    }

    /// Writes `band,index,coefficient` rows for plotting.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "band,index,coefficient")?;
        for (name, band) in self.band_names().iter().zip(self.bands()) {
            for (i, c) in band.iter().enumerate() {
                writeln!(out, "{name},{i},{c}")?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

pub fn band_names(levels: usize) -> Vec<String> {
    std::iter::once(format!("L{levels}"))
        .chain((1..=levels).rev().map(|j| format!("H{j}")))
        .collect()
}

pub fn nominal_band_ranges(levels: usize, sample_rate: f64) -> Vec<SubBand> {
    let edge = |j: usize| sample_rate / 2f64.powi(j as i32);
    let mut out = vec![SubBand {
        name: format!("L{levels}"),
        low_hz: 0.0,
        high_hz: edge(levels),
    }];
    for j in (1..=levels).rev() {
        out.push(SubBand {
            name: format!("H{j}"),
            low_hz: edge(j),
            high_hz: edge(j - 1),
        });
    }
    out
}

fn mirror(idx: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut i = idx.rem_euclid(period);
    if i >= n {
        i = period - 1 - i;
    }
    i as usize
}

/// Single analysis step: returns `(approx, detail)`.
pub fn dwt_level(signal: &[f64], spec: &WaveletSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    spec.validate()?;
    let bank = spec.family.filter_bank();
    analyze(signal, &bank, spec.extension)
}

fn analyze(signal: &[f64], bank: &FilterBank, ext: Extension) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = signal.len();
    let f = bank.len();
    if n < f {
        return Err(Error::SignalTooShort(format!(
            "{n} samples is shorter than the {f}-tap filter"
        )));
    }
    match ext {
        Extension::Symmetric => {
            let z: Vec<f64> = (0..n + 2 * (f - 1))
                .map(|t| signal[mirror(t as isize - (f as isize - 1), n)])
                .collect();
            let out_len = (n + f - 1).div_ceil(2);
            let mut approx = Vec::with_capacity(out_len);
            let mut detail = Vec::with_capacity(out_len);
            for j in 0..out_len {
                let window = &z[2 * j..2 * j + f];
                approx.push(dot(&bank.lo, window));
                detail.push(dot(&bank.hi, window));
            }
            Ok((approx, detail))
        }
        Extension::Periodization => {
            if !n.is_multiple_of(2) {
                return Err(Error::SignalTooShort(format!(
                    "periodized transform needs an even length, got {n}"
                )));
            }
            let out_len = n / 2;
            let mut approx = vec![0.0; out_len];
            let mut detail = vec![0.0; out_len];
            for j in 0..out_len {
                for m in 0..f {
                    let x = signal[(2 * j + m) % n];
                    approx[j] += bank.lo[m] * x;
                    detail[j] += bank.hi[m] * x;
                }
            }
            Ok((approx, detail))
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Single synthesis step producing `out_len` samples.
pub fn idwt_level(approx: &[f64], detail: &[f64], out_len: usize, spec: &WaveletSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    synthesize(approx, detail, out_len, &spec.family.filter_bank(), spec.extension)
}

fn synthesize(approx: &[f64], detail: &[f64], out_len: usize, bank: &FilterBank, ext: Extension) -> Result<Vec<f64>> {
    let f = bank.len();
    let expected = match ext {
        Extension::Symmetric => (out_len + f - 1).div_ceil(2),
        Extension::Periodization => out_len / 2,
    };
    if approx.len() != expected || detail.len() != expected {
        return Err(Error::InconsistentBands(format!(
            "bands of length {}/{} cannot rebuild {out_len} samples (expected {expected})",
            approx.len(),
            detail.len()
        )));
    }
    match ext {
        Extension::Symmetric => {
            let mut out = vec![0.0; out_len];
            for (i, x) in out.iter_mut().enumerate() {
                // coefficient j touches x[i] when 2j lies in [i, i + F - 1]
                let first = i.div_ceil(2);
                let last = (i + f - 1) / 2;
                for j in first..=last {
                    let m = i + f - 1 - 2 * j;
                    *x += approx[j] * bank.lo[m] + detail[j] * bank.hi[m];
                }
            }
            Ok(out)
        }
        Extension::Periodization => {
            if !out_len.is_multiple_of(2) {
                return Err(Error::InconsistentBands(format!(
                    "periodized synthesis needs an even length, got {out_len}"
                )));
            }
            let mut out = vec![0.0; out_len];
            for j in 0..expected {
                for m in 0..f {
                    out[(2 * j + m) % out_len] += approx[j] * bank.lo[m] + detail[j] * bank.hi[m];
                }
            }
            Ok(out)
        }
    }
}

/// Multi-level decomposition by iterating [`dwt_level`] on the approximation.
pub fn wavedec(signal: &[f64], spec: &WaveletSpec) -> Result<WaveletDecomposition> {
    spec.validate()?;
    let bank = spec.family.filter_bank();
    let mut approx = signal.to_vec();
    let mut details = Vec::with_capacity(spec.levels);
    let mut level_lengths = Vec::with_capacity(spec.levels);
    for level in 1..=spec.levels {
        level_lengths.push(approx.len());
        let (a, d) = analyze(&approx, &bank, spec.extension).map_err(|e| match e {
            Error::SignalTooShort(msg) => Error::SignalTooShort(format!("level {level} of {}: {msg}", spec.levels)),
            other => other,
        })?;
        details.push(d);
        approx = a;
    }
    details.reverse();
    Ok(WaveletDecomposition {
        approx,
        details,
        spec: *spec,
        original_length: signal.len(),
        level_lengths,
    })
}

/// Inverse of [`wavedec`].
pub fn waverec(decomp: &WaveletDecomposition) -> Result<Vec<f64>> {
    let spec = &decomp.spec;
    spec.validate()?;
    let levels = decomp.details.len();
    if levels != spec.levels || decomp.level_lengths.len() != levels {
        return Err(Error::InconsistentBands(format!(
            "{levels} detail bands and {} level lengths for a {}-level spec",
            decomp.level_lengths.len(),
            spec.levels
        )));
    }
    if decomp.level_lengths.first() != Some(&decomp.original_length) {
        return Err(Error::InconsistentBands(
            "first level length differs from the original length".into(),
        ));
    }
    let bank = spec.family.filter_bank();
    let mut approx = decomp.approx.clone();
    for (i, detail) in decomp.details.iter().enumerate() {
        let out_len = decomp.level_lengths[levels - 1 - i];
        approx = synthesize(&approx, detail, out_len, &bank, spec.extension)?;
    }
    Ok(approx)
}

/// Robust noise scale `median(|d|) / 0.6745`.
pub fn estimate_noise_sigma(finest_detail: &[f64]) -> f64 {
    if finest_detail.is_empty() {
        return 0.0;
    }
    let abs: Vec<f64> = finest_detail.iter().map(|d| d.abs()).collect();
    crate::stats::median(&abs) / 0.6745
}

/// Scaled universal threshold `k * sigma * sqrt(2 ln n)`.
pub fn universal_threshold(sigma: f64, n: usize, k: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::invalid(format!("universal threshold needs n >= 2, got {n}")));
    }
    if !(0.0..=1.0).contains(&k) {
        return Err(Error::invalid(format!(
            "threshold factor k must lie in [0, 1], got {k}"
        )));
    }
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!("noise sigma must be >= 0, got {sigma}")));
    }
    Ok(k * sigma * (2.0 * (n as f64).ln()).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMode {
    #[default]
    Soft,
    Hard,
}

impl FromStr for ThresholdMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "soft" => Ok(ThresholdMode::Soft),
            "hard" => Ok(ThresholdMode::Hard),
            other => Err(Error::invalid(format!("unknown threshold mode `{other}`"))),
        }
    }
}

pub fn threshold_band(band: &mut [f64], lambda: f64, mode: ThresholdMode) {
    match mode {
        ThresholdMode::Soft => band.iter_mut().for_each(|c| *c = crate::rpca::shrink(*c, lambda)),
        ThresholdMode::Hard => band.iter_mut().for_each(|c| {
            if c.abs() <= lambda {
                *c = 0.0
            }
        }),
    }
}

/// Wavelet-threshold denoising: decompose, shrink every detail band with the
/// scaled universal threshold (noise scale taken from H1), rebuild.
pub fn denoise(signal: &[f64], spec: &WaveletSpec, k: f64, mode: ThresholdMode) -> Result<Vec<f64>> {
    let mut decomp = wavedec(signal, spec)?;
    let sigma = estimate_noise_sigma(decomp.finest_detail());
    let lambda = universal_threshold(sigma, signal.len().max(2), k)?;
    for band in &mut decomp.details {
        threshold_band(band, lambda, mode);
    }
    waverec(&decomp)
}
