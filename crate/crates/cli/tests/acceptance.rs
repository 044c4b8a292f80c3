//! Acceptance suite: one PASS/FAIL line per criterion at its stated
//! tolerance. Pass criterion numbers as arguments to run a subset. The run
//! exits nonzero on failures only when VOXID_ACCEPTANCE_STRICT=1.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use voxid::audio::{write_wav, AudioClip, WavEncoding};
use voxid::classify::{gmm_fit, ova_train, svm_train_binary, BinarySvmModel, KernelSpec};
use voxid::eval::read_report;
use voxid::features::{
    dwt_feature_names, pca_fit_rows, read_feature_csv, write_feature_csv, Dataset, FeatureKind, Standardizer,
};
use voxid::rpca::{rpca_alm, RpcaConfig};
use voxid::spectral::{istft, stft};
use voxid::wavelet::{denoise, wavedec, waverec, ThresholdMode, WaveletSpec};

type Check = Result<(bool, String), String>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Check,
}

const CRITERIA: &[Criterion] = &[
    Criterion {
        id: 1,
        name: "STFT/ISTFT roundtrip",
        budget: Some(Duration::from_secs(1)),
        run: stft_roundtrip,
    },
    Criterion {
        id: 2,
        name: "DWT perfect reconstruction",
        budget: Some(Duration::from_secs(1)),
        run: dwt_reconstruction,
    },
    Criterion {
        id: 3,
        name: "RPCA exact recovery",
        budget: Some(Duration::from_secs(60)),
        run: rpca_recovery,
    },
    Criterion {
        id: 4,
        name: "denoising gain",
        budget: None,
        run: denoising_gain,
    },
    Criterion {
        id: 5,
        name: "SVM correctness",
        budget: None,
        run: svm_correctness,
    },
    Criterion {
        id: 6,
        name: "GMM recovery",
        budget: None,
        run: gmm_recovery,
    },
    Criterion {
        id: 7,
        name: "harness sanity",
        budget: None,
        run: harness_sanity,
    },
    Criterion {
        id: 8,
        name: "end-to-end ordering",
        budget: Some(Duration::from_secs(15 * 60)),
        run: end_to_end,
    },
    Criterion {
        id: 9,
        name: "feature dimension contract",
        budget: None,
        run: feature_dimensions,
    },
];

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in CRITERIA.iter().filter(|c| wanted.is_empty() || wanted.contains(&c.id)) {
        let start = Instant::now();
        let result = (c.run)();
        let elapsed = start.elapsed();
        let (pass, detail) = match result {
            Ok((ok, detail)) => match c.budget {
                Some(b) if elapsed > b => (false, format!("{detail}; {elapsed:.2?} exceeds {b:.0?}")),
                _ => (ok, detail),
            },
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {}: {} ({detail}; {elapsed:.2?})",
            if pass { "PASS" } else { "FAIL" },
            c.id,
            c.name
        );
    }
    if failed > 0 && std::env::var("VOXID_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn gaussian_noise(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn stft_roundtrip() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rate = 44_100;
    let clip = AudioClip::new(gaussian_noise(5 * rate as usize, &mut rng), rate);
    let back = istft(&stft(&clip, 1024, 256).map_err(err)?).map_err(err)?;
    if back.len() != clip.len() {
        return Ok((false, format!("length {} != {}", back.len(), clip.len())));
    }
    let e = max_abs_diff(&back.samples, &clip.samples);
    Ok((e < 1e-10, format!("max abs error {e:.2e}")))
}

fn dwt_reconstruction() -> Check {
    let spec = WaveletSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for n in [1000, 4096, 50_000] {
        let x = gaussian_noise(n, &mut rng);
        let back = waverec(&wavedec(&x, &spec).map_err(err)?).map_err(err)?;
        worst = worst.max(max_abs_diff(&x, &back));
    }
    let n = 4096;
    let cubic: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / n as f64;
            1.0 + 2.0 * t - 3.0 * t * t + 0.5 * t * t * t
        })
        .collect();
    let d = wavedec(&cubic, &spec).map_err(err)?;
    // each band's edges see the boundary extension
    let edge = spec.family.filter_len();
    let detail = d
        .details
        .iter()
        .flat_map(|band| band[edge..band.len() - edge].iter())
        .fold(0.0f64, |m, c| m.max(c.abs()));
    Ok((
        worst < 1e-10 && detail < 1e-8,
        format!("reconstruction {worst:.2e}, cubic interior detail {detail:.2e}"),
    ))
}

fn rpca_recovery() -> Check {
    let n = 200;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let gauss =
        |r: usize, c: usize, rng: &mut ChaCha8Rng| DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));
    let l0 = gauss(n, 2, &mut rng) * gauss(2, n, &mut rng);
    let mut s0 = DMatrix::zeros(n, n);
    for v in s0.iter_mut() {
        if rng.gen::<f64>() < 0.05 {
            *v = if rng.gen::<bool>() { 10.0 } else { -10.0 };
        }
    }
    let config = RpcaConfig {
        lambda: Some(1.0 / (n as f64).sqrt()),
        ..RpcaConfig::default()
    };
    let out = rpca_alm(&(&l0 + &s0), &config).map_err(err)?;
    let rel = (&out.low_rank - &l0).norm() / l0.norm();
    Ok((
        out.converged && out.iterations <= 200 && rel < 1e-3,
        format!("relative error {rel:.2e} after {} iterations", out.iterations),
    ))
}

fn snr_db(clean: &[f64], estimate: &[f64]) -> f64 {
    let signal: f64 = clean.iter().map(|x| x * x).sum();
    let noise: f64 = clean.iter().zip(estimate).map(|(c, e)| (c - e).powi(2)).sum();
    10.0 * (signal / noise).log10()
}

fn denoising_gain() -> Check {
    let rate = 4160.0;
    let n = 12 * 4160;
    let clean: Vec<f64> = (0..n).map(|i| (2.0 * PI * 260.0 * i as f64 / rate).sin()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let power = 0.5;
    let sigma = (power / 10f64.powf(0.5)).sqrt();
    let noise = Normal::new(0.0, sigma).map_err(err)?;
    let noisy: Vec<f64> = clean.iter().map(|c| c + noise.sample(&mut rng)).collect();
    let input = snr_db(&clean, &noisy);
    let spec = WaveletSpec::default();
    let mut best = (f64::NEG_INFINITY, 0.0, ThresholdMode::Soft);
    for mode in [ThresholdMode::Soft, ThresholdMode::Hard] {
        for k in (1..=9).map(|i| i as f64 / 10.0) {
            let out = denoise(&noisy, &spec, k, mode).map_err(err)?;
            let gain = snr_db(&clean, &out) - input;
            if gain > best.0 {
                best = (gain, k, mode);
            }
        }
    }
    Ok((
        best.0 >= 5.0,
        format!(
            "best gain {:.2} dB at k = {} ({:?}), input SNR {input:.2} dB",
            best.0, best.1, best.2
        ),
    ))
}

fn dual_sum(m: &BinarySvmModel) -> f64 {
    m.dual_coefficients.iter().sum::<f64>().abs()
}

fn svm_correctness() -> Check {
    let x = vec![vec![-1.0], vec![1.0]];
    let two = svm_train_binary(&x, &[-1.0, 1.0], KernelSpec::Linear, 1e3).map_err(err)?;
    let boundary = two.decision(&[0.0]).map_err(err)?.abs();
    let margin = (two.decision(&[1.0]).map_err(err)? - 1.0)
        .abs()
        .max((two.decision(&[-1.0]).map_err(err)? + 1.0).abs());

    let xor = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
    let y = [-1.0, -1.0, 1.0, 1.0];
    let rbf = svm_train_binary(&xor, &y, KernelSpec::Rbf { gamma: 1.0 }, 100.0).map_err(err)?;
    let mut correct = 0;
    for (xi, yi) in xor.iter().zip(&y) {
        correct += usize::from(rbf.decision(xi).map_err(err)?.signum() == *yi);
    }

    let blobs = blob_dataset(&[[0.0, 0.0], [6.0, 0.0], [0.0, 6.0]], 30, 5);
    let mut models = vec![two, rbf];
    for kernel in [
        KernelSpec::Linear,
        KernelSpec::Polynomial {
            alpha: 0.5,
            coef0: 1.0,
            degree: 3,
        },
        KernelSpec::Rbf { gamma: 0.5 },
    ] {
        models.extend(ova_train(&blobs, kernel, 1.0).map_err(err)?.models);
    }
    let worst_dual = models.iter().map(dual_sum).fold(0.0, f64::max);
    Ok((
        boundary < 1e-3 && margin < 1e-3 && correct == 4 && worst_dual < 1e-6,
        format!(
            "boundary {boundary:.1e}, margin error {margin:.1e}, XOR {correct}/4, max |sum alpha y| {worst_dual:.1e} over {} models",
            models.len()
        ),
    ))
}

fn gmm_recovery() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x: Vec<Vec<f64>> = (0..2000)
        .map(|i| {
            let m = if i % 2 == 0 { 5.0 } else { -5.0 };
            (0..2).map(|_| m + rng.sample::<f64, _>(StandardNormal)).collect()
        })
        .collect();
    let fit = gmm_fit(&x, 2, 6, 1e-8, 500).map_err(err)?;
    let mut mean_err: f64 = 0.0;
    let mut weight_err: f64 = 0.0;
    for (w, mean) in fit.model.weights.iter().zip(&fit.model.means) {
        let target = if mean[0] > 0.0 { 5.0 } else { -5.0 };
        mean_err = mean.iter().map(|m| (m - target).abs()).fold(mean_err, f64::max);
        weight_err = weight_err.max((w - 0.5).abs());
    }
    // an over-specified fit runs many EM steps, so monotonicity is exercised
    let long = gmm_fit(&x, 4, 6, 1e-12, 500).map_err(err)?;
    let monotone = [&fit, &long]
        .iter()
        .all(|f| f.log_likelihood_history.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    Ok((
        mean_err < 0.1 && weight_err < 0.05 && monotone,
        format!(
            "mean error {mean_err:.3}, weight error {weight_err:.3}, log-likelihood non-decreasing over {} + {} steps: {monotone}",
            fit.log_likelihood_history.len(),
            long.log_likelihood_history.len()
        ),
    ))
}

fn blob_dataset(centres: &[[f64; 2]], per_class: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (c, centre) in centres.iter().enumerate() {
        for _ in 0..per_class {
            rows.push(
                centre
                    .iter()
                    .map(|m| m + rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            );
            labels.push(format!("class{c}"));
        }
    }
    Dataset::new(vec!["x".into(), "y".into()], rows, labels).expect("valid blobs")
}

fn voxid() -> Command {
    Command::new(env!("CARGO_BIN_EXE_voxid"))
}

fn run_cli(cmd: &mut Command) -> Result<String, String> {
    let out = cmd.output().map_err(err)?;
    if !out.status.success() {
        return Err(format!("{:?} failed: {}", cmd, String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn harness_sanity() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let data = blob_dataset(&[[0.0, 0.0], [10.0, 0.0], [0.0, 10.0], [10.0, 10.0]], 50, 7);
    let csv = dir.path().join("blobs.csv");
    write_feature_csv(&data, &csv).map_err(err)?;
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        run_cli(
            voxid()
                .args(["--seed", "42", "evaluate"])
                .arg(&csv)
                .args([
                    "--model",
                    "svm-linear",
                    "--folds",
                    "10",
                    "--repeats",
                    "15",
                    "--no-timing",
                    "-o",
                ])
                .arg(&out),
        )?;
        let path = out.join("blobs-svm-linear.csv");
        let report = read_report(&path).map_err(err)?;
        let bytes = std::fs::read(&path).map_err(err)?;
        let confusion = std::fs::read(voxid::eval::confusion_path(&path)).map_err(err)?;
        reports.push((report, bytes, confusion));
    }
    let (r, a, ca) = &reports[0];
    let (_, b, cb) = &reports[1];
    let identical = a == b && ca == cb;
    Ok((
        r.mean_accuracy >= 0.99 && r.accuracies.len() == 15 && identical,
        format!(
            "mean accuracy {:.4} over {} repeats, byte-identical rerun: {identical}",
            r.mean_accuracy,
            r.accuracies.len()
        ),
    ))
}

struct Singer {
    harmonics: [f64; 8],
    vibrato_hz: f64,
    vibrato_cents: f64,
}

const SINGERS: [Singer; 4] = [
    Singer {
        harmonics: [1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3],
        vibrato_hz: 5.0,
        vibrato_cents: 40.0,
    },
    Singer {
        harmonics: [1.0, 0.4, 0.15, 0.05, 0.02, 0.01, 0.0, 0.0],
        vibrato_hz: 6.5,
        vibrato_cents: 60.0,
    },
    Singer {
        harmonics: [1.0, 0.05, 0.6, 0.05, 0.4, 0.05, 0.25, 0.05],
        vibrato_hz: 4.0,
        vibrato_cents: 30.0,
    },
    Singer {
        harmonics: [0.3, 0.6, 1.0, 0.7, 0.3, 0.15, 0.1, 0.05],
        vibrato_hz: 7.5,
        vibrato_cents: 80.0,
    },
];

const SYNTH_RATE: u32 = 8000;
const CLIP_SECONDS: f64 = 4.0;

/// A sung phrase of half-second notes over a fixed chord with light noise.
fn synth_clip(singer: &Singer, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let rate = SYNTH_RATE as f64;
    let n = (CLIP_SECONDS * rate) as usize;
    let note_len = (0.5 * rate) as usize;
    let jitter: Vec<f64> = singer.harmonics.iter().map(|h| h * rng.gen_range(0.8..1.2)).collect();
    let vib_phase = rng.gen_range(0.0..2.0 * PI);
    let mut phases = [0.0f64; 8];
    let mut f0 = 0.0;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        if i % note_len == 0 {
            f0 = 180.0 * 2f64.powf(rng.gen_range(0.0..1.0));
        }
        let t = i as f64 / rate;
        let pos = (i % note_len) as f64 / note_len as f64;
        let env = (pos * 20.0).min(1.0) * (1.0 - pos).powf(0.3);
        let cents = singer.vibrato_cents * (2.0 * PI * singer.vibrato_hz * t + vib_phase).sin();
        let f = f0 * 2f64.powf(cents / 1200.0);
        let mut v = 0.0;
        for (h, (amp, phase)) in jitter.iter().zip(phases.iter_mut()).enumerate() {
            let fh = f * (h + 1) as f64;
            *phase += 2.0 * PI * fh / rate;
            if fh < rate / 2.0 {
                v += amp * phase.sin();
            }
        }
        let chord: f64 = [(110.0, 0.5), (138.6, 0.4), (164.8, 0.4), (220.0, 0.3)]
            .iter()
            .map(|(fc, a)| a * (2.0 * PI * fc * t).sin())
            .sum();
        out.push(0.35 * env * v + 0.35 * chord + 0.01 * rng.sample::<f64, _>(StandardNormal));
    }
    out
}

fn write_corpus(dir: &Path, per_singer: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut manifest = String::from("path,label\n");
    for i in 0..per_singer {
        for (s, singer) in SINGERS.iter().enumerate() {
            let name = format!("singer{s}_{i:02}.wav");
            let clip = AudioClip::new(synth_clip(singer, &mut rng), SYNTH_RATE);
            write_wav(&clip, dir.join(&name), WavEncoding::Pcm16).map_err(err)?;
            manifest.push_str(&format!("{name},singer{s}\n"));
        }
    }
    std::fs::write(dir.join("manifest.csv"), manifest).map_err(err)
}

fn summary_accuracy(summary: &str, features: &str) -> Option<f64> {
    summary
        .lines()
        .skip(1)
        .find(|l| l.starts_with(&format!("{features},")))
        .and_then(|l| l.split(',').nth(2))
        .and_then(|v| v.parse().ok())
}

fn end_to_end() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    write_corpus(dir.path(), 40)?;
    let config = format!(
        "manifest = \"manifest.csv\"\n\
         output_dir = \"out\"\n\
         segment_seconds = {CLIP_SECONDS}\n\
         features = [\"dwt\", \"mfcc\", \"raw\"]\n\
         models = [\"svm-linear\"]\n"
    );
    std::fs::write(dir.path().join("voxid.toml"), config).map_err(err)?;
    run_cli(voxid().arg("pipeline").arg(dir.path().join("voxid.toml")))?;
    let summary = std::fs::read_to_string(dir.path().join("out/summary.csv")).map_err(err)?;
    let acc = |f: &str| summary_accuracy(&summary, f).ok_or_else(|| format!("no {f} row in summary"));
    let (dwt, mfcc, raw) = (acc("dwt")?, acc("mfcc")?, acc("raw")?);
    Ok((
        dwt >= raw && dwt >= 0.5 && mfcc >= 0.5,
        format!("160 clips, svm-linear mean accuracy: dwt {dwt:.4}, mfcc {mfcc:.4}, raw {raw:.4}"),
    ))
}

fn feature_dimensions() -> Check {
    let names = dwt_feature_names(4);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let dir = tempfile::tempdir().map_err(err)?;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (s, singer) in SINGERS.iter().enumerate() {
        for _ in 0..10 {
            let clip = AudioClip::new(synth_clip(singer, &mut rng), SYNTH_RATE);
            let clip = voxid::audio::resample(&clip, 4160).map_err(err)?;
            let fv = voxid::features::extract_dwt_features(&clip, &WaveletSpec::default(), 0.3).map_err(err)?;
            if fv.values.len() != 18 || fv.feature_names != names {
                return Ok((false, format!("extractor emitted {} values", fv.values.len())));
            }
            rows.push(fv.values);
            labels.push(format!("singer{s}"));
        }
    }
    let data = Dataset::new(names.clone(), rows, labels).map_err(err)?;
    let path = dir.path().join("dwt.csv");
    write_feature_csv(&data, &path).map_err(err)?;
    let header_cols = read_feature_csv(&path).map_err(err)?.feature_names.len();
    let scaler = Standardizer::fit(&data.rows).map_err(err)?;
    let z = data
        .rows
        .iter()
        .map(|r| scaler.transform(r))
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    let pca = pca_fit_rows(&z, 0.9999).map_err(err)?;
    let unnamed = names.iter().any(|n| n.is_empty());
    Ok((
        names.len() == 18 && header_cols == 18 && !unnamed && pca.dim() <= 18,
        format!(
            "{} named features ({}), PCA at 99.99% keeps {} components",
            names.len(),
            FeatureKind::Dwt,
            pca.dim()
        ),
    ))
}
