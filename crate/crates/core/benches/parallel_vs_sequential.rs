use std::f64::consts::PI;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use voxid::audio::AudioClip;
use voxid::classify::{GramMatrix, KernelSpec, ModelSpec, ModelVariant};
use voxid::eval::{cross_validate, CvPlan};
use voxid::features::{extract_dwt_features, Dataset};
use voxid::par::{self, Execution};
use voxid::rpca::{separate_voice, RpcaConfig};
use voxid::spectral::stft;
use voxid::wavelet::WaveletSpec;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn blobs(per_class: usize, dim: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for c in 0..4 {
        for _ in 0..per_class {
            rows.push(
                (0..dim)
                    .map(|j| if j == c { 6.0 } else { 0.0 } + rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            );
            labels.push(format!("c{c}"));
        }
    }
    Dataset::new((0..dim).map(|j| format!("f{j}")).collect(), rows, labels).unwrap()
}

fn segments(count: usize, seconds: f64) -> Vec<AudioClip> {
    let rate = 4160;
    (0..count)
        .map(|k| {
            let f0 = 180.0 + 20.0 * k as f64;
            let n = (seconds * rate as f64) as usize;
            AudioClip::new(
                (0..n)
                    .map(|i| {
                        let t = i as f64 / rate as f64;
                        (1..6)
                            .map(|h| (2.0 * PI * f0 * h as f64 * t).sin() / h as f64)
                            .sum::<f64>()
                            + 0.5 * (2.0 * PI * 110.0 * t).sin()
                    })
                    .collect(),
                rate,
            )
        })
        .collect()
}

fn gram(c: &mut Criterion) {
    let mut group = c.benchmark_group("gram_matrix");
    for n in [200, 800] {
        let data = blobs(n / 4, 18);
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, n), &data, |b, d| {
                b.iter(|| GramMatrix::compute(&KernelSpec::Rbf { gamma: 0.05 }, &d.rows, exec))
            });
        }
    }
    group.finish();
}

fn cv(c: &mut Criterion) {
    let mut group = c.benchmark_group("cross_validate");
    group.sample_size(10);
    let data = blobs(50, 18);
    for (name, exec) in MODES {
        let plan = CvPlan {
            repeats: 3,
            model: ModelSpec::new(ModelVariant::SvmLinear),
            record_timing: false,
            execution: exec,
            ..CvPlan::default()
        };
        group.bench_function(name, |b| b.iter(|| cross_validate(&data, &plan).unwrap()));
    }
    group.finish();
}

fn features(c: &mut Criterion) {
    let mut group = c.benchmark_group("dwt_features");
    let segs = segments(16, 12.0);
    let spec = WaveletSpec::default();
    for (name, exec) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| par::try_map_range(exec, segs.len(), |i| extract_dwt_features(&segs[i], &spec, 0.3)).unwrap())
        });
    }
    group.finish();
}

fn separation(c: &mut Criterion) {
    let mut group = c.benchmark_group("separate_voice");
    group.sample_size(10);
    let segs = segments(4, 4.0);
    let config = RpcaConfig::default();
    for (name, exec) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| {
                par::try_map_range(exec, segs.len(), |i| {
                    separate_voice(&stft(&segs[i], 1024, 256)?, &config).map(|s| s.voice)
                })
                .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, gram, cv, features, separation);
criterion_main!(benches);
