//! End-to-end runner: separate -> denoise -> extract -> evaluate, with a
//! content-hash cache for every stage.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audio::{load_audio, load_audio_with, resample, segment, write_wav, AudioClip, WavEncoding};
use crate::classify::{ModelSpec, ModelVariant};
use crate::error::{Error, Result};
use crate::eval::{cross_validate, emit_report, read_report, CvPlan, EvalReport};
use crate::features::{
    dwt_band_features, dwt_feature_names, extract_mfcc_features, extract_raw_features, mfcc_feature_names,
    raw_feature_names, read_feature_csv, write_feature_csv, Dataset, FeatureKind, MfccConfig,
};
use crate::par::{self, Execution};
use crate::rpca::{separate_voice, RpcaConfig};
use crate::spectral::{stft, StftConfig};
use crate::wavelet::{denoise, ThresholdMode, WaveletSpec};

/// One labelled recording.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: String,
}

/// Reads a `path,label` CSV. Relative paths resolve against the manifest's
/// directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != ["path", "label"] {
        return Err(Error::format(
            "manifest",
            format!("expected header `path,label`, found `{}`", header.join(",")),
        ));
    }
    let mut entries = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let (p, label) = (rec.get(0).unwrap_or(""), rec.get(1).unwrap_or(""));
        if p.is_empty() || label.is_empty() {
            return Err(Error::format("manifest", format!("row {} has an empty field", i + 1)));
        }
        entries.push(ManifestEntry {
            path: base.join(p),
            label: label.to_string(),
        });
    }
    Ok(entries)
}

/// Wavelet-threshold settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DenoiseConfig {
    pub k: f64,
    pub mode: ThresholdMode,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self {
            k: 0.3,
            mode: ThresholdMode::Soft,
        }
    }
}

/// Every pipeline knob, loadable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// `path,label` CSV listing the recordings.
    pub manifest: PathBuf,
    pub output_dir: PathBuf,
    /// Working rate every clip is resampled to before separation.
    pub sample_rate: u32,
    pub segment_seconds: f64,
    /// Run RPCA vocal separation; when false the resampled mixture is used.
    pub separate: bool,
    pub stft: StftConfig,
    pub rpca: RpcaConfig,
    pub wavelet: WaveletSpec,
    pub denoise: DenoiseConfig,
    pub mfcc: MfccConfig,
    /// Samples per segment for the raw variant.
    pub raw_length: usize,
    pub features: Vec<FeatureKind>,
    pub models: Vec<ModelVariant>,
    /// Classifier hyperparameters; the variant comes from `models`.
    pub model: ModelSpec,
    pub cv: CvPlan,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            manifest: PathBuf::from("manifest.csv"),
            output_dir: PathBuf::from("voxid-out"),
            sample_rate: 4160,
            segment_seconds: 12.0,
            separate: true,
            stft: StftConfig::default(),
            rpca: RpcaConfig::default(),
            wavelet: WaveletSpec::default(),
            denoise: DenoiseConfig::default(),
            mfcc: MfccConfig::default(),
            raw_length: 4096,
            features: vec![FeatureKind::Dwt, FeatureKind::Mfcc, FeatureKind::Raw],
            models: vec![ModelVariant::SvmLinear],
            model: ModelSpec::default(),
            cv: CvPlan::default(),
        }
    }
}

impl PipelineConfig {
    /// Parses a TOML file; relative `manifest` and `output_dir` resolve
    /// against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.manifest = base.join(&cfg.manifest);
        cfg.output_dir = base.join(&cfg.output_dir);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always serializable")
    }

    /// Checks numeric ranges; with `check_paths` also requires the manifest
    /// to exist.
    pub fn validate(&self, check_paths: bool) -> Result<()> {
        let cfg = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        if self.sample_rate == 0 {
            return Err(Error::Config("sample_rate must be positive".into()));
        }
        if !(self.segment_seconds > 0.0 && self.segment_seconds.is_finite()) {
            return Err(Error::Config("segment_seconds must be positive".into()));
        }
        let seg_len = (self.segment_seconds * self.sample_rate as f64).round() as usize;
        self.stft.validate().map_err(cfg)?;
        if self.separate && seg_len <= self.stft.window_len / 2 {
            return Err(Error::Config(format!(
                "a {seg_len}-sample segment is too short for a {}-sample STFT window",
                self.stft.window_len
            )));
        }
        self.rpca.validate().map_err(cfg)?;
        self.wavelet.validate().map_err(cfg)?;
        if seg_len < self.wavelet.family.filter_len() {
            return Err(Error::Config(format!(
                "a {seg_len}-sample segment is too short for {}",
                self.wavelet.family
            )));
        }
        if !(0.0..=1.0).contains(&self.denoise.k) {
            return Err(Error::Config(format!(
                "denoise k must lie in [0, 1], got {}",
                self.denoise.k
            )));
        }
        self.mfcc.validate().map_err(cfg)?;
        if self.raw_length == 0 {
            return Err(Error::Config("raw_length must be positive".into()));
        }
        if self.features.is_empty() || self.models.is_empty() {
            return Err(Error::Config(
                "at least one feature variant and one model are required".into(),
            ));
        }
        let plan = self.plan_for(self.models[0], Execution::Sequential);
        plan.validate().map_err(cfg)?;
        if check_paths && !self.manifest.is_file() {
            return Err(Error::Config(format!(
                "manifest {} does not exist",
                self.manifest.display()
            )));
        }
        Ok(())
    }

    pub fn plan_for(&self, variant: ModelVariant, execution: Execution) -> CvPlan {
        CvPlan {
            model: ModelSpec {
                variant,
                seed: self.cv.seed,
                ..self.model
            },
            execution,
            ..self.cv
        }
    }

    fn separation_params(&self) -> impl Serialize + '_ {
        (
            "separate-v1",
            self.sample_rate,
            self.segment_seconds,
            self.separate,
            &self.stft,
            &self.rpca,
        )
    }
}

/// A recording that could not be used.
#[derive(Debug, Clone, PartialEq)]
pub struct Skipped {
    pub path: PathBuf,
    pub reason: String,
}

/// Loads, resamples and cuts a clip into labelled segments.
pub fn load_segments(entry: &ManifestEntry, cfg: &PipelineConfig) -> Result<Vec<AudioClip>> {
    let clip = load_audio(&entry.path)?.with_label(entry.label.clone());
    let clip = resample(&clip, cfg.sample_rate)?;
    segment(&clip, cfg.segment_seconds)
}

/// The vocal stem of a segment, or the segment itself when separation is off.
/// Samples are rounded to `f32` so cached and fresh values agree.
pub fn voice_of(seg: &AudioClip, cfg: &PipelineConfig) -> Result<AudioClip> {
    let mut voice = if cfg.separate {
        let spec = stft(seg, cfg.stft.window_len, cfg.stft.hop)?;
        separate_voice(&spec, &cfg.rpca)?.voice
    } else {
        seg.clone()
    };
    voice.label = seg.label.clone();
    round_to_f32(&mut voice);
    Ok(voice)
}

fn round_to_f32(clip: &mut AudioClip) {
    clip.samples.iter_mut().for_each(|s| *s = *s as f32 as f64);
}

pub fn denoise_clip(voice: &AudioClip, cfg: &PipelineConfig) -> Result<AudioClip> {
    let mut out = AudioClip {
        samples: denoise(&voice.samples, &cfg.wavelet, cfg.denoise.k, cfg.denoise.mode)?,
        ..voice.clone()
    };
    round_to_f32(&mut out);
    Ok(out)
}

pub fn feature_names(kind: FeatureKind, cfg: &PipelineConfig) -> Vec<String> {
    match kind {
        FeatureKind::Dwt => dwt_feature_names(cfg.wavelet.levels),
        FeatureKind::Mfcc => mfcc_feature_names(cfg.mfcc.n_coeffs),
        FeatureKind::Raw => raw_feature_names(cfg.raw_length),
    }
}

/// Features of one segment. `denoised` is required for the DWT variant;
/// MFCC and raw use the (separated) voice directly.
pub fn segment_features(
    kind: FeatureKind,
    voice: &AudioClip,
    denoised: Option<&AudioClip>,
    cfg: &PipelineConfig,
) -> Result<Vec<f64>> {
    match kind {
        FeatureKind::Dwt => {
            let d = match denoised {
                Some(d) => d.clone(),
                None => denoise_clip(voice, cfg)?,
            };
            dwt_band_features(&d.samples, &cfg.wavelet)
        }
        FeatureKind::Mfcc => Ok(extract_mfcc_features(voice, &cfg.mfcc)?.values),
        FeatureKind::Raw => Ok(extract_raw_features(voice, cfg.raw_length)?.values),
    }
}

fn is_unreadable(e: &Error) -> bool {
    matches!(
        e,
        Error::UnreadableAudio { .. } | Error::UnsupportedEncoding { .. } | Error::EmptyAudio(_) | Error::Io(_)
    )
}

fn stage_err(stage: &'static str) -> impl Fn(Error) -> Error {
    move |e| Error::Stage {
        stage,
        source: Box::new(e),
    }
}

/// Result of extracting one feature variant from a manifest.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub dataset: Dataset,
    pub skipped: Vec<Skipped>,
}

/// Uncached extraction: rows follow manifest order, then segment index.
/// Unreadable files are skipped with a warning.
pub fn extract_manifest(
    entries: &[ManifestEntry],
    kind: FeatureKind,
    cfg: &PipelineConfig,
    exec: Execution,
) -> Result<Extraction> {
    let per_clip = par::map(exec, entries, |entry| -> Result<Vec<(Vec<f64>, String)>> {
        let segments = load_segments(entry, cfg)?;
        segments
            .iter()
            .map(|seg| {
                let voice = voice_of(seg, cfg)?;
                Ok((segment_features(kind, &voice, None, cfg)?, entry.label.clone()))
            })
            .collect()
    });
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut skipped = Vec::new();
    for (entry, result) in entries.iter().zip(per_clip) {
        match result {
            Ok(clip_rows) => {
                for (r, l) in clip_rows {
                    rows.push(r);
                    labels.push(l);
                }
            }
            Err(e) if is_unreadable(&e) => {
                log::warn!("skipping {}: {e}", entry.path.display());
                skipped.push(Skipped {
                    path: entry.path.clone(),
                    reason: e.to_string(),
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Extraction {
        dataset: Dataset::new(feature_names(kind, cfg), rows, labels)?,
        skipped,
    })
}

/// Whether a stage reused its cached artifacts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Cached,
    Computed,
}

impl std::fmt::Display for StageStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(match self {
            StageStatus::Cached => "cached",
            StageStatus::Computed => "computed",
        })
    }
}

/// Cache hits and misses of one stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageReport {
    pub stage: &'static str,
    pub cached: usize,
    pub computed: usize,
}

impl StageReport {
    fn new(stage: &'static str) -> Self {
        Self {
            stage,
            cached: 0,
            computed: 0,
        }
    }

    fn record(&mut self, status: StageStatus) {
        match status {
            StageStatus::Cached => self.cached += 1,
            StageStatus::Computed => self.computed += 1,
        }
    }

    pub fn status(&self) -> StageStatus {
        if self.computed == 0 {
            StageStatus::Cached
        } else {
            StageStatus::Computed
        }
    }
}

/// One feature-variant x model evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub features: FeatureKind,
    pub model: ModelVariant,
    pub report: EvalReport,
    pub report_path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub stages: Vec<StageReport>,
    pub results: Vec<ExperimentResult>,
    pub skipped: Vec<Skipped>,
    pub summary_path: PathBuf,
}

impl PipelineOutcome {
    pub fn stage(&self, name: &str) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.stage == name)
    }

    pub fn result(&self, features: FeatureKind, model: ModelVariant) -> Option<&ExperimentResult> {
        self.results.iter().find(|r| r.features == features && r.model == model)
    }
}

fn hash_key(parts: &impl Serialize) -> String {
    let bytes = serde_json::to_vec(parts).expect("cache key parts serialize");
    hex::encode(&Sha256::digest(bytes)[..16])
}

const DONE_MARKER: &str = "segments";

/// Directory of per-segment WAVs, complete once the marker file exists.
struct SegmentCache {
    dir: PathBuf,
}

impl SegmentCache {
    fn new(root: &Path, stage: &str, key: &str) -> Self {
        Self {
            dir: root.join("cache").join(stage).join(key),
        }
    }

    fn load(&self, label: &str) -> Result<Option<Vec<AudioClip>>> {
        let marker = self.dir.join(DONE_MARKER);
        let Ok(text) = fs::read_to_string(&marker) else {
            return Ok(None);
        };
        let count: usize = text
            .trim()
            .parse()
            .map_err(|_| Error::format("cache marker", marker.display().to_string()))?;
        (0..count)
            .map(|i| {
                let clip = load_audio_with(self.dir.join(format!("seg{i:04}.wav")), false)?;
                Ok(clip.with_label(label))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    fn store(&self, clips: &[AudioClip]) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        for (i, c) in clips.iter().enumerate() {
            write_wav(c, self.dir.join(format!("seg{i:04}.wav")), WavEncoding::Float32)?;
        }
        fs::write(self.dir.join(DONE_MARKER), clips.len().to_string())?;
        Ok(())
    }
}

fn artifact_is_current(key_path: &Path, key: &str, artifacts: &[&Path]) -> bool {
    fs::read_to_string(key_path).is_ok_and(|k| k.trim() == key) && artifacts.iter().all(|p| p.exists())
}

struct ClipState {
    label: String,
    separate_key: String,
    denoise_key: String,
    voices: Vec<AudioClip>,
    denoised: Option<Vec<AudioClip>>,
}

/// Runs every stage, reusing cached artifacts whose inputs are unchanged.
pub fn run_pipeline(cfg: &PipelineConfig, exec: Execution) -> Result<PipelineOutcome> {
    cfg.validate(true)?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out)?;
    let entries = read_manifest(&cfg.manifest)?;
    if entries.is_empty() {
        return Err(Error::Config(format!(
            "manifest {} lists no files",
            cfg.manifest.display()
        )));
    }

    // separate
    let sep_params = hash_key(&cfg.separation_params());
    let separated = par::map(
        exec,
        &entries,
        |entry| -> Result<(String, Vec<AudioClip>, StageStatus)> {
            let bytes = fs::read(&entry.path)?;
            let key = hash_key(&(&sep_params, hex::encode(Sha256::digest(&bytes))));
            let cache = SegmentCache::new(out, "separate", &key);
            if let Some(voices) = cache.load(&entry.label)? {
                return Ok((key, voices, StageStatus::Cached));
            }
            let voices = load_segments(entry, cfg)?
                .iter()
                .map(|s| voice_of(s, cfg))
                .collect::<Result<Vec<_>>>()?;
            cache.store(&voices)?;
            Ok((key, voices, StageStatus::Computed))
        },
    );
    let mut sep_report = StageReport::new("separate");
    let mut skipped = Vec::new();
    let mut clips = Vec::new();
    for (entry, r) in entries.iter().zip(separated) {
        match r {
            Ok((key, voices, status)) => {
                sep_report.record(status);
                clips.push(ClipState {
                    label: entry.label.clone(),
                    denoise_key: hash_key(&(&key, "denoise-v1", &cfg.wavelet, &cfg.denoise)),
                    separate_key: key,
                    voices,
                    denoised: None,
                });
            }
            Err(e) if is_unreadable(&e) => {
                log::warn!("skipping {}: {e}", entry.path.display());
                skipped.push(Skipped {
                    path: entry.path.clone(),
                    reason: e.to_string(),
                });
            }
            Err(e) => return Err(stage_err("separate")(e)),
        }
    }
    if clips.is_empty() {
        return Err(stage_err("separate")(Error::DegenerateData(
            "no readable recordings".into(),
        )));
    }

    // denoise (only the DWT variant consumes it)
    let mut den_report = StageReport::new("denoise");
    if cfg.features.contains(&FeatureKind::Dwt) {
        let results = par::try_map_range(exec, clips.len(), |i| -> Result<(Vec<AudioClip>, StageStatus)> {
            let c = &clips[i];
            let cache = SegmentCache::new(out, "denoise", &c.denoise_key);
            if let Some(d) = cache.load(&c.label)? {
                return Ok((d, StageStatus::Cached));
            }
            let d = c
                .voices
                .iter()
                .map(|v| denoise_clip(v, cfg))
                .collect::<Result<Vec<_>>>()?;
            cache.store(&d)?;
            Ok((d, StageStatus::Computed))
        })
        .map_err(stage_err("denoise"))?;
        for (c, (d, status)) in clips.iter_mut().zip(results) {
            den_report.record(status);
            c.denoised = Some(d);
        }
    }

    // extract
    let mut ext_report = StageReport::new("extract");
    let feature_dir = out.join("features");
    fs::create_dir_all(&feature_dir)?;
    let mut datasets = Vec::new();
    for &kind in &cfg.features {
        let upstream: Vec<(&str, &str)> = clips
            .iter()
            .map(|c| {
                let k = if kind == FeatureKind::Dwt {
                    &c.denoise_key
                } else {
                    &c.separate_key
                };
                (c.label.as_str(), k.as_str())
            })
            .collect();
        let variant_params = match kind {
            FeatureKind::Dwt => serde_json::to_value(cfg.wavelet)?,
            FeatureKind::Mfcc => serde_json::to_value(cfg.mfcc)?,
            FeatureKind::Raw => serde_json::to_value(cfg.raw_length)?,
        };
        let key = hash_key(&("extract-v1", kind, variant_params, upstream));
        let csv_path = feature_dir.join(format!("{kind}.csv"));
        let key_path = feature_dir.join(format!("{kind}.key"));
        let dataset = if artifact_is_current(&key_path, &key, &[&csv_path]) {
            ext_report.record(StageStatus::Cached);
            read_feature_csv(&csv_path).map_err(stage_err("extract"))?
        } else {
            let per_clip = par::try_map_range(exec, clips.len(), |i| -> Result<Vec<Vec<f64>>> {
                let c = &clips[i];
                c.voices
                    .iter()
                    .enumerate()
                    .map(|(s, v)| {
                        let d = c.denoised.as_ref().map(|d| &d[s]);
                        segment_features(kind, v, d, cfg)
                    })
                    .collect()
            })
            .map_err(stage_err("extract"))?;
            let mut rows = Vec::new();
            let mut labels = Vec::new();
            for (c, clip_rows) in clips.iter().zip(per_clip) {
                for r in clip_rows {
                    rows.push(r);
                    labels.push(c.label.clone());
                }
            }
            let ds = Dataset::new(feature_names(kind, cfg), rows, labels).map_err(stage_err("extract"))?;
            write_feature_csv(&ds, &csv_path)?;
            fs::write(&key_path, &key)?;
            ext_report.record(StageStatus::Computed);
            // reread so cached and fresh runs see identical values
            read_feature_csv(&csv_path)?
        };
        datasets.push((kind, key, dataset));
    }

    // evaluate
    let mut eval_report = StageReport::new("evaluate");
    let report_dir = out.join("reports");
    fs::create_dir_all(&report_dir)?;
    let mut results = Vec::new();
    for (kind, feature_key, dataset) in &datasets {
        for &variant in &cfg.models {
            let plan = cfg.plan_for(variant, exec);
            let key = hash_key(&("evaluate-v1", feature_key, &plan.model, &plan));
            let path = report_dir.join(format!("{kind}-{variant}.csv"));
            let key_path = report_dir.join(format!("{kind}-{variant}.key"));
            let report = if artifact_is_current(&key_path, &key, &[&path, &crate::eval::confusion_path(&path)]) {
                eval_report.record(StageStatus::Cached);
                read_report(&path).map_err(stage_err("evaluate"))?
            } else {
                let report = cross_validate(dataset, &plan).map_err(stage_err("evaluate"))?;
                emit_report(&report, &path)?;
                fs::write(&key_path, &key)?;
                eval_report.record(StageStatus::Computed);
                read_report(&path)?
            };
            log::info!(
                "{kind} + {variant}: mean accuracy {:.4} (std {:.4})",
                report.mean_accuracy,
                report.std_accuracy
            );
            results.push(ExperimentResult {
                features: *kind,
                model: variant,
                report,
                report_path: path,
            });
        }
    }

    let summary_path = out.join("summary.csv");
    write_summary(&results, &summary_path)?;
    Ok(PipelineOutcome {
        stages: vec![sep_report, den_report, ext_report, eval_report],
        results,
        skipped,
        summary_path,
    })
}

fn write_summary(results: &[ExperimentResult], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["features", "model", "mean_accuracy", "std_accuracy", "train_seconds"])?;
    for r in results {
        w.write_record([
            r.features.to_string(),
            r.model.to_string(),
            crate::features::format_float(r.report.mean_accuracy),
            crate::features::format_float(r.report.std_accuracy),
            crate::features::format_float(r.report.total_train_seconds()),
        ])?;
    }
    w.flush()?;
    Ok(())
}
