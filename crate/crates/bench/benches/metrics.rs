use std::hint::black_box;

use conv_bench::scored_samples;
use conv_core::eval::{accuracy_at_optimal_threshold, auroc, average_precision};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn metrics(c: &mut Criterion) {
    let mut group = c.benchmark_group("metrics");
    for &n in &[1_000usize, 100_000] {
        let samples = scored_samples(n, 1);
        group.bench_with_input(BenchmarkId::new("auroc", n), &samples, |b, s| b.iter(|| auroc(black_box(s)).unwrap()));
        group.bench_with_input(BenchmarkId::new("average_precision", n), &samples, |b, s| {
            b.iter(|| average_precision(black_box(s)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("accuracy", n), &samples, |b, s| {
            b.iter(|| accuracy_at_optimal_threshold(black_box(s)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, metrics);
criterion_main!(benches);
