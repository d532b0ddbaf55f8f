//! Single worker versus the full pool on the data-parallel paths: corpus
//! generation, the matmul kernel and batched scoring. Build with
//! `--no-default-features` to measure the sequential fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use fauforensics::corpus::{generate_split, GenConfig};
use fauforensics::model::{prepare_all, HeadMode, Model, ModelConfig};
use fauforensics::par::{current_workers, with_workers};
use fauforensics::tensor::kernels::matmul;

fn pools() -> Vec<(String, usize)> {
    let all = current_workers();
    let mut v = vec![("1-worker".to_string(), 1)];
    if all > 1 {
        v.push((format!("{all}-workers"), 0));
    }
    v
}

fn generation(c: &mut Criterion) {
    let cfg = GenConfig::default();
    let mut g = c.benchmark_group("generate_64_clips");
    g.sample_size(10);
    for (name, w) in pools() {
        g.bench_function(BenchmarkId::from_parameter(&name), |b| {
            b.iter(|| with_workers(w, || generate_split(black_box(3), 64, &cfg).unwrap()))
        });
    }
    g.finish();
}

fn kernel(c: &mut Criterion) {
    let (m, k, n) = (800, 512, 64);
    let a: Vec<f64> = (0..m * k).map(|i| (i % 97) as f64 * 0.01).collect();
    let bm: Vec<f64> = (0..k * n).map(|i| (i % 89) as f64 * 0.01).collect();
    let mut g = c.benchmark_group("matmul_800x512x64");
    for (name, w) in pools() {
        g.bench_function(BenchmarkId::from_parameter(&name), |b| {
            b.iter(|| with_workers(w, || matmul(black_box(&a), black_box(&bm), m, k, n)))
        });
    }
    g.finish();
}

fn scoring(c: &mut Criterion) {
    let clips = generate_split(5, 64, &GenConfig::default()).unwrap();
    let cfg = ModelConfig {
        latent: 64,
        head_mode: HeadMode::FourClass,
        ..ModelConfig::default()
    };
    let model = Model::new(cfg, 1).unwrap();
    let inputs = prepare_all(&clips, &model.config).unwrap();
    let refs: Vec<_> = inputs.iter().collect();
    let mut g = c.benchmark_group("predict_64_clips");
    g.sample_size(10);
    for (name, w) in pools() {
        g.bench_function(BenchmarkId::from_parameter(&name), |b| {
            b.iter(|| with_workers(w, || model.predict_batch(black_box(&refs)).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, generation, kernel, scoring);
criterion_main!(benches);
