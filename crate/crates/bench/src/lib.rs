//! Seeded inputs shared by the benchmarks.

use conv_core::{ImageTensor, Label, ScoredSample, TrainBatch};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn gaussian_rows(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect()).collect()
}

/// A batch whose transformed rows are small perturbations of the originals.
pub fn train_batch(per_class: usize, dim: usize, seed: u64) -> TrainBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
    let jitter = |rows: &[Vec<f64>], rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        rows.iter()
            .map(|r| r.iter().map(|v| v + 0.1 * rng.sample::<f64, _>(StandardNormal)).collect())
            .collect()
    };
    let natural = gaussian_rows(per_class, dim, seed);
    let generated: Vec<Vec<f64>> = gaussian_rows(per_class, dim, seed + 1)
        .into_iter()
        .map(|r| r.into_iter().map(|v| v + 0.5).collect())
        .collect();
    TrainBatch {
        natural_t: jitter(&natural, &mut rng),
        generated_t: jitter(&generated, &mut rng),
        natural,
        generated,
    }
}

pub fn noise_image(size: usize, seed: u64) -> ImageTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..3 * size * size).map(|_| rng.random::<f32>()).collect();
    ImageTensor::new(size, size, data).expect("valid size")
}

/// Scores with a mild class shift and plenty of ties.
pub fn scored_samples(n: usize, seed: u64) -> Vec<ScoredSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = if i % 2 == 0 { Label::Natural } else { Label::Generated };
            let shift = if label.is_generated() { 0.3 } else { 0.0 };
            let score = ((rng.random::<f64>() + shift) * 1000.0).round() / 1000.0;
            ScoredSample::new(format!("s{i:06}"), score, label)
        })
        .collect()
}
