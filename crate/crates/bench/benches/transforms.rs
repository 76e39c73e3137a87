use std::hint::black_box;

use conv_bench::noise_image;
use conv_core::transforms::{apply_transform, draw_transform, gaussian_blur, perturb};
use conv_core::{PerturbationSpec, TransformSpec};
use criterion::{criterion_group, criterion_main, Criterion};

fn blur(c: &mut Criterion) {
    let img = noise_image(224, 1);
    c.bench_function("gaussian_blur_224_k5", |b| b.iter(|| gaussian_blur(black_box(&img), 5, 1.0)));
}

fn transform(c: &mut Criterion) {
    let img = noise_image(224, 2);
    let spec = TransformSpec::default();
    c.bench_function("draw_and_apply_224", |b| {
        let mut seed = 0u64;
        b.iter(|| {
            seed += 1;
            apply_transform(black_box(&img), &draw_transform(&spec, seed))
        })
    });
}

fn jpeg(c: &mut Criterion) {
    let img = noise_image(224, 3);
    let spec = PerturbationSpec::Jpeg { quality: 75 };
    c.bench_function("jpeg_q75_224", |b| b.iter(|| perturb(black_box(&img), &spec, 0).unwrap()));
}

criterion_group!(benches, blur, transform, jpeg);
criterion_main!(benches);
