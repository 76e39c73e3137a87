//! A deterministic, transform-sensitive embedder with no model file.

use conv_core::{Embedder, FeatureVector, ImageTensor, Result};

/// Per-channel means, contrasts and left/right balance, plus a
/// high-frequency energy term. L2-normalized.
pub struct StatsEmbedder {
    pub size: usize,
}

impl Embedder for StatsEmbedder {
    fn backbone_id(&self) -> &str {
        "stats"
    }

    fn input_size(&self) -> usize {
        self.size
    }

    fn output_dim(&self) -> usize {
        10
    }

    fn embed(&self, image: &ImageTensor) -> Result<FeatureVector> {
        let (h, w) = (image.height(), image.width());
        let mut out = Vec::with_capacity(10);
        let mut hf = 0.0f64;
        for c in 0..3 {
            let p = image.plane(c);
            let n = p.len() as f64;
            let mean = p.iter().map(|&v| v as f64).sum::<f64>() / n;
            let var = p.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
            let mut balance = 0.0;
            for y in 0..h {
                for x in 0..w {
                    let v = p[y * w + x] as f64;
                    balance += if x < w / 2 { v } else { -v };
                    if x + 1 < w {
                        hf += (v - p[y * w + x + 1] as f64).powi(2);
                    }
                }
            }
            out.extend([mean, var.sqrt(), balance / n]);
        }
        out.push(hf / (3 * h * w) as f64);
        FeatureVector::from_f64(&out)?.l2_normalized()
    }
}
