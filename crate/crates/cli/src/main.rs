use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::bail;
use clap::{Args, Parser, Subcommand};
use voxid::audio::{load_audio, resample, write_wav, WavEncoding};
use voxid::classify::{ModelSpec, ModelVariant, TrainedModel};
use voxid::eval::{cross_validate, emit_report};
use voxid::features::{read_feature_csv, write_feature_csv, FeatureKind};
use voxid::par::Execution;
use voxid::pipeline::{extract_manifest, read_manifest, run_pipeline, PipelineConfig};
use voxid::rpca::separate_voice;
use voxid::spectral::stft;
use voxid::wavelet::{denoise, wavedec, ThresholdMode};

#[derive(Parser, Debug)]
#[command(name = "voxid", version, about = "Singer identification from polyphonic recordings")]
struct Cli {
    /// Seed for every shuffle, initialization and split.
    #[arg(long, global = true, env = "VOXID_SEED")]
    seed: Option<u64>,

    /// TOML configuration; command-line flags override its values.
    #[arg(long, global = true, env = "VOXID_CONFIG")]
    config: Option<PathBuf>,

    /// Worker threads for per-file and per-fold work (1 = sequential).
    #[arg(long, global = true, env = "VOXID_WORKERS")]
    workers: Option<usize>,

    /// Increase log detail (-v info, -vv debug). VOXID_LOG takes env_logger filters.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split a recording into `.voice.wav` and `.music.wav` stems.
    Separate {
        input: PathBuf,
        #[arg(short, long, default_value = ".")]
        output_dir: PathBuf,
        #[arg(long)]
        sample_rate: Option<u32>,
        /// Override the RPCA sparsity weight (default 1/sqrt(max dim)).
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Wavelet-threshold denoise a recording.
    Denoise {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        sample_rate: Option<u32>,
        #[arg(short, long)]
        k: Option<f64>,
        #[arg(long)]
        mode: Option<ThresholdMode>,
        /// Also dump the denoised sub-band coefficients as `band,index,coefficient`.
        #[arg(long)]
        bands_csv: Option<PathBuf>,
    },
    /// Turn a `path,label` manifest into a feature CSV, one row per segment.
    Extract {
        manifest: PathBuf,
        #[arg(short, long, default_value = "dwt")]
        features: FeatureKind,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        signal: SignalArgs,
    },
    /// Fit a classifier on a feature CSV and save it as JSON.
    Train {
        features: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        pca_retained: Option<f64>,
        #[arg(long)]
        no_pca: bool,
    },
    /// Score a saved model on a feature CSV.
    Predict {
        model: PathBuf,
        features: PathBuf,
        /// Write `row,true,predicted` here.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Repeated k-fold cross-validation of a feature CSV.
    Evaluate {
        features: PathBuf,
        #[arg(short, long)]
        output_dir: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        cv: CvArgs,
    },
    /// Run separate, denoise, extract and evaluate with stage caching.
    Pipeline {
        /// Configuration file; same as the global --config.
        config_file: Option<PathBuf>,
    },
    /// Print the effective configuration as TOML.
    Config,
}

#[derive(Args, Debug)]
struct SignalArgs {
    #[arg(long)]
    sample_rate: Option<u32>,
    #[arg(long)]
    segment_seconds: Option<f64>,
    #[arg(short, long)]
    k: Option<f64>,
    #[arg(long)]
    mode: Option<ThresholdMode>,
    /// Use the resampled mixture without vocal separation.
    #[arg(long)]
    no_separate: bool,
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// svm-linear, svm-poly, svm-rbf or gmm.
    #[arg(short, long)]
    model: Option<ModelVariant>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    degree: Option<u32>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    coef0: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    components: Option<usize>,
}

#[derive(Args, Debug)]
struct CvArgs {
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    pca_retained: Option<f64>,
    #[arg(long)]
    no_pca: bool,
    /// Deal each class evenly across folds instead of plain shuffling.
    #[arg(long)]
    stratified: bool,
    /// Write zero training times so reports are byte-identical across runs.
    #[arg(long)]
    no_timing: bool,
}

impl SignalArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(r) = self.sample_rate {
            cfg.sample_rate = r;
        }
        if let Some(s) = self.segment_seconds {
            cfg.segment_seconds = s;
        }
        if let Some(k) = self.k {
            cfg.denoise.k = k;
        }
        if let Some(m) = self.mode {
            cfg.denoise.mode = m;
        }
        if self.no_separate {
            cfg.separate = false;
        }
    }
}

impl ModelArgs {
    fn spec(&self, cfg: &PipelineConfig) -> ModelSpec {
        let mut spec = ModelSpec {
            variant: self.model.unwrap_or(cfg.models[0]),
            seed: cfg.cv.seed,
            ..cfg.model
        };
        if let Some(c) = self.c {
            spec.c = c;
        }
        if let Some(d) = self.degree {
            spec.degree = d;
        }
        if let Some(a) = self.alpha {
            spec.alpha = a;
        }
        if let Some(c0) = self.coef0 {
            spec.coef0 = c0;
        }
        if self.gamma.is_some() {
            spec.gamma = self.gamma;
        }
        if let Some(k) = self.components {
            spec.components = k;
        }
        spec
    }
}

fn pca_setting(cfg: &PipelineConfig, retained: Option<f64>, no_pca: bool) -> Option<f64> {
    if no_pca {
        None
    } else {
        retained.or(cfg.cv.pca_retained)
    }
}

fn load_config(cli: &Cli, explicit: Option<&Path>) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match explicit.or(cli.config.as_deref()) {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.cv.seed = seed;
        cfg.model.seed = seed;
    }
    Ok(cfg)
}

fn execution(workers: Option<usize>) -> anyhow::Result<Execution> {
    match workers {
        Some(0) => Err(voxid::Error::Config("--workers must be at least 1".into()).into()),
        Some(1) => Ok(Execution::Sequential),
        #[cfg(feature = "parallel")]
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| anyhow::anyhow!("configuring the worker pool: {e}"))?;
            Ok(Execution::Parallel)
        }
        #[cfg(not(feature = "parallel"))]
        Some(_) => {
            log::warn!("built without the `parallel` feature; running sequentially");
            Ok(Execution::Sequential)
        }
        None => Ok(Execution::Parallel),
    }
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let exec = execution(cli.workers)?;
    match &cli.command {
        Command::Separate {
            input,
            output_dir,
            sample_rate,
            lambda,
        } => {
            let mut cfg = load_config(cli, None)?;
            if let Some(r) = sample_rate {
                cfg.sample_rate = *r;
            }
            if lambda.is_some() {
                cfg.rpca.lambda = *lambda;
            }
            cfg.stft.validate()?;
            cfg.rpca.validate()?;
            let clip = load_audio(input)?;
            let clip = resample(&clip, cfg.sample_rate)?;
            let spec = stft(&clip, cfg.stft.window_len, cfg.stft.hop)?;
            let sep = separate_voice(&spec, &cfg.rpca)?;
            std::fs::create_dir_all(output_dir)?;
            let stem = file_stem(input);
            let voice_path = output_dir.join(format!("{stem}.voice.wav"));
            let music_path = output_dir.join(format!("{stem}.music.wav"));
            write_wav(&sep.voice, &voice_path, WavEncoding::Float32)?;
            write_wav(&sep.accompaniment, &music_path, WavEncoding::Float32)?;
            let d = &sep.decomposition;
            if !d.converged {
                log::warn!("RPCA stopped at the iteration cap (residual {:.2e})", d.final_residual);
            }
            println!(
                "{}: {} iterations, residual {:.2e}\n  {}\n  {}",
                input.display(),
                d.iterations,
                d.final_residual,
                voice_path.display(),
                music_path.display()
            );
        }
        Command::Denoise {
            input,
            output,
            sample_rate,
            k,
            mode,
            bands_csv,
        } => {
            let mut cfg = load_config(cli, None)?;
            if let Some(r) = sample_rate {
                cfg.sample_rate = *r;
            }
            let k = k.unwrap_or(cfg.denoise.k);
            let mode = mode.unwrap_or(cfg.denoise.mode);
            let clip = resample(&load_audio(input)?, cfg.sample_rate)?;
            let clean = denoise(&clip.samples, &cfg.wavelet, k, mode)?;
            let out = voxid::audio::AudioClip { samples: clean, ..clip };
            write_wav(&out, output, WavEncoding::Float32)?;
            let decomp = wavedec(&out.samples, &cfg.wavelet)?;
            for band in decomp.band_ranges(out.sample_rate as f64) {
                println!("{:>3}  {:>7.1} - {:>7.1} Hz", band.name, band.low_hz, band.high_hz);
            }
            if let Some(path) = bands_csv {
                decomp.write_csv(path)?;
            }
            println!("wrote {}", output.display());
        }
        Command::Extract {
            manifest,
            features,
            output,
            signal,
        } => {
            let mut cfg = load_config(cli, None)?;
            signal.apply(&mut cfg);
            cfg.manifest = manifest.clone();
            cfg.features = vec![*features];
            cfg.validate(true)?;
            let entries = read_manifest(manifest)?;
            let ex = extract_manifest(&entries, *features, &cfg, exec)?;
            if ex.dataset.is_empty() {
                bail!("no segments extracted from {}", manifest.display());
            }
            write_feature_csv(&ex.dataset, output)?;
            println!(
                "{} rows x {} {features} features -> {} ({} of {} files skipped)",
                ex.dataset.len(),
                ex.dataset.dim(),
                output.display(),
                ex.skipped.len(),
                entries.len()
            );
        }
        Command::Train {
            features,
            output,
            model,
            pca_retained,
            no_pca,
        } => {
            let cfg = load_config(cli, None)?;
            let spec = model.spec(&cfg);
            spec.validate()?;
            let data = read_feature_csv(features)?;
            let pca = pca_setting(&cfg, *pca_retained, *no_pca);
            let trained = TrainedModel::train(&data, &spec, pca, exec)?;
            trained.save(output)?;
            let preds = trained.predict_all(&data.rows, exec)?;
            let correct = preds.iter().zip(&data.labels).filter(|(p, l)| p == l).count();
            println!(
                "{} on {} rows ({} classes, {} dims after preprocessing): training accuracy {:.4} -> {}",
                spec.variant,
                data.len(),
                data.n_classes(),
                trained.preprocessor.output_dim(),
                correct as f64 / data.len() as f64,
                output.display()
            );
        }
        Command::Predict {
            model,
            features,
            output,
        } => {
            let trained = TrainedModel::load(model)?;
            let data = read_feature_csv(features)?;
            if data.feature_names != trained.feature_names {
                return Err(voxid::Error::DimensionMismatch {
                    expected: trained.feature_names.len(),
                    actual: data.feature_names.len(),
                }
                .into());
            }
            let preds = trained.predict_all(&data.rows, exec)?;
            let mut correct = 0;
            let mut w = match output {
                Some(p) => {
                    let mut w = csv::Writer::from_path(p)?;
                    w.write_record(["row", "true", "predicted"])?;
                    Some(w)
                }
                None => None,
            };
            for (i, (&p, &l)) in preds.iter().zip(&data.labels).enumerate() {
                let truth = &data.class_names[l];
                let pred = &trained.class_names[p];
                correct += usize::from(truth == pred);
                if let Some(w) = w.as_mut() {
                    w.write_record([i.to_string(), truth.clone(), pred.clone()])?;
                }
            }
            if let Some(mut w) = w {
                w.flush()?;
            }
            println!(
                "accuracy {:.4} on {} rows",
                correct as f64 / data.len() as f64,
                data.len()
            );
        }
        Command::Evaluate {
            features,
            output_dir,
            model,
            cv,
        } => {
            let cfg = load_config(cli, None)?;
            let spec = model.spec(&cfg);
            let mut plan = cfg.plan_for(spec.variant, exec);
            plan.model = spec;
            if let Some(f) = cv.folds {
                plan.folds = f;
            }
            if let Some(r) = cv.repeats {
                plan.repeats = r;
            }
            plan.pca_retained = pca_setting(&cfg, cv.pca_retained, cv.no_pca);
            plan.stratified |= cv.stratified;
            plan.record_timing &= !cv.no_timing;
            plan.validate()?;
            let data = read_feature_csv(features)?;
            let report = cross_validate(&data, &plan)?;
            std::fs::create_dir_all(output_dir)?;
            let path = output_dir.join(format!("{}-{}.csv", file_stem(features), spec.variant));
            emit_report(&report, &path)?;
            println!(
                "{}: mean accuracy {:.4} (std {:.4}) over {} x {}-fold, training {:.2} s -> {}",
                spec.variant,
                report.mean_accuracy,
                report.std_accuracy,
                plan.repeats,
                plan.folds,
                report.total_train_seconds(),
                path.display()
            );
        }
        Command::Pipeline { config_file } => {
            let cfg = load_config(cli, config_file.as_deref())?;
            let outcome = run_pipeline(&cfg, exec)?;
            for s in &outcome.stages {
                println!(
                    "{:<9} {:<8} ({} computed, {} cached)",
                    s.stage,
                    s.status(),
                    s.computed,
                    s.cached
                );
            }
            for r in &outcome.results {
                println!(
                    "{:<5} {:<11} mean accuracy {:.4} (std {:.4})",
                    r.features, r.model, r.report.mean_accuracy, r.report.std_accuracy
                );
            }
            if !outcome.skipped.is_empty() {
                println!("{} files skipped", outcome.skipped.len());
            }
            println!("summary: {}", outcome.summary_path.display());
        }
        Command::Config => {
            let cfg = load_config(cli, None)?;
            cfg.validate(false)?;
            print!("{}", cfg.to_toml());
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let usage = err
        .chain()
        .filter_map(|e| e.downcast_ref::<voxid::Error>())
        .any(voxid::Error::is_usage);
    if usage {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("VOXID_LOG")
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
