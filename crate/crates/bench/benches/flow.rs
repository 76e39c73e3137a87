use std::hint::black_box;

use conv_bench::{gaussian_rows, train_batch};
use conv_core::trainer::grad;
use conv_core::{FlowConfig, FlowModel, TrainConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn forward(c: &mut Criterion) {
    let mut group = c.benchmark_group("flow_forward");
    for &(dim, hidden) in &[(64, 128), (512, 256), (1024, 512)] {
        let flow = FlowModel::random(dim, &FlowConfig { hidden, ..Default::default() }, 1).unwrap();
        let v = &gaussian_rows(1, dim, 2)[0];
        group.bench_with_input(BenchmarkId::from_parameter(format!("D{dim}_H{hidden}")), v, |b, v| {
            b.iter(|| flow.forward(black_box(v)).unwrap())
        });
    }
    group.finish();
}

fn inverse(c: &mut Criterion) {
    let flow = FlowModel::random(512, &FlowConfig { hidden: 256, ..Default::default() }, 1).unwrap();
    let (z, _) = flow.forward(&gaussian_rows(1, 512, 2)[0]).unwrap();
    c.bench_function("flow_inverse_D512_H256", |b| b.iter(|| flow.inverse(black_box(&z)).unwrap()));
}

fn gradient(c: &mut Criterion) {
    let mut group = c.benchmark_group("flow_grad");
    group.sample_size(10);
    for &jobs in &[1usize, 4] {
        let config = TrainConfig {
            jobs,
            ..Default::default()
        };
        let flow = FlowModel::random(256, &FlowConfig { hidden: 128, ..Default::default() }, 3).unwrap();
        let batch = train_batch(64, 256, 4);
        group.bench_with_input(BenchmarkId::new("D256_H128_B128", jobs), &batch, |b, batch| {
            b.iter(|| grad(&flow, black_box(batch), &config).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, forward, inverse, gradient);
criterion_main!(benches);
