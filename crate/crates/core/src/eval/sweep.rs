use super::metrics::{accuracy_at_optimal_threshold, auroc, average_precision, ScoredSample};
use super::report::RobustnessRow;
use crate::detector::{consistency_score, DetectorConfig};
use crate::embeddings::{Embedder, ImageTensor, Label};
use crate::error::{ConvError, Result};
use crate::flow::FlowModel;
use crate::parallel::Workers;
use crate::seed::derive_seed;
use crate::trainer::{fconv_score, ScoreWeights};
use crate::transforms::{apply_transform, draw_transform, perturb, PerturbationSpec};

/// A decoded image with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    pub sample_id: String,
    pub label: Label,
    pub source_id: String,
    pub image: ImageTensor,
}

/// Anything that turns an image into a detection score (higher = generated).
pub trait Scorer: Sync {
    fn score(&self, image: &ImageTensor, sample_id: &str) -> Result<f64>;
}

/// The training-free consistency score.
pub struct ConvScorer<'a, E: ?Sized> {
    pub backend: &'a E,
    pub config: DetectorConfig,
}

impl<E: Embedder + ?Sized> Scorer for ConvScorer<'_, E> {
    fn score(&self, image: &ImageTensor, sample_id: &str) -> Result<f64> {
        consistency_score(self.backend, image, sample_id, &self.config).map(|s| s.score)
    }
}

/// The flow-based score: latent consistency plus calibrated likelihood.
pub struct FconvScorer<'a, E: ?Sized> {
    pub backend: &'a E,
    pub flow: &'a FlowModel,
    pub config: DetectorConfig,
    pub weights: ScoreWeights,
}

impl<E: Embedder + ?Sized> Scorer for FconvScorer<'_, E> {
    fn score(&self, image: &ImageTensor, _sample_id: &str) -> Result<f64> {
        self.config.validate()?;
        let v = self.backend.embed(image)?.to_f64();
        let views = (0..self.config.rounds)
            .map(|round| {
                let sample = draw_transform(&self.config.transform, self.config.round_seed(round));
                self.backend
                    .embed(&apply_transform(image, &sample))
                    .map(|f| f.to_f64())
                    .map_err(|e| ConvError::Round {
                        round,
                        source: Box::new(e),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        fconv_score(self.flow, &v, &views, self.weights)
    }
}

/// Score every image, in input order.
pub fn score_images<S: Scorer + ?Sized>(scorer: &S, images: &[LabeledImage], jobs: usize) -> Result<Vec<ScoredSample>> {
    let workers = Workers::new(jobs)?;
    workers
        .map(images.len(), |i| {
            let img = &images[i];
            scorer.score(&img.image, &img.sample_id).map(|score| {
                ScoredSample::new(img.sample_id.clone(), score, img.label).with_source(img.source_id.clone())
            })
        })
        .into_iter()
        .collect()
}

/// Perturb, rescore and measure each grid cell. The identity cell is added in
/// front when missing. Image `i` gets perturbation seed `derive_seed(seed, i)`
/// in every cell, so cells differ only in the perturbation itself.
pub fn robustness_sweep<S: Scorer + ?Sized>(
    scorer: &S,
    images: &[LabeledImage],
    grid: &[PerturbationSpec],
    seed: u64,
    jobs: usize,
) -> Result<Vec<RobustnessRow>> {
    if grid.is_empty() {
        return Err(ConvError::InvalidInput("robustness grid is empty".into()));
    }
    if images.is_empty() {
        return Err(ConvError::InvalidInput("no images to sweep".into()));
    }
    for spec in grid {
        spec.validate()?;
    }
    let mut cells = grid.to_vec();
    if !cells.contains(&PerturbationSpec::Identity) {
        cells.insert(0, PerturbationSpec::Identity);
    }
    let n = images.len();
    let workers = Workers::new(jobs)?;
    let scores = workers.map(cells.len() * n, |k| {
        let (cell, i) = (&cells[k / n], k % n);
        let img = &images[i];
        let wrap = |e| ConvError::Grid {
            cell: format!("perturbation {cell}, sample `{}`", img.sample_id),
            source: Box::new(e),
        };
        let perturbed = perturb(&img.image, cell, derive_seed(seed, i as u64)).map_err(wrap)?;
        let score = scorer.score(&perturbed, &img.sample_id).map_err(wrap)?;
        Ok(ScoredSample::new(img.sample_id.clone(), score, img.label).with_source(img.source_id.clone()))
    });
    let scores = scores.into_iter().collect::<Result<Vec<_>>>()?;
    cells
        .iter()
        .zip(scores.chunks(n))
        .map(|(&perturbation, samples)| {
            let wrap = |e| ConvError::Grid {
                cell: format!("perturbation {perturbation}"),
                source: Box::new(e),
            };
            Ok(RobustnessRow {
                perturbation,
                auroc: auroc(samples).map_err(wrap)?,
                ap: average_precision(samples).map_err(wrap)?,
                acc: accuracy_at_optimal_threshold(samples).map_err(wrap)?.0,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::FeatureVector;

    /// Mean colour per channel plus a constant: blind to noise-free structure.
    struct MeanEmbedder;

    impl Embedder for MeanEmbedder {
        fn backbone_id(&self) -> &str {
            "mean"
        }
        fn input_size(&self) -> usize {
            8
        }
        fn output_dim(&self) -> usize {
            4
        }
        fn embed(&self, image: &ImageTensor) -> Result<FeatureVector> {
            let m: Vec<f32> = (0..3)
                .map(|c| {
                    let p = image.plane(c);
                    p.iter().sum::<f32>() / p.len() as f32
                })
                .chain([1.0])
                .collect();
            FeatureVector::new(m)
        }
    }

    /// Scores by image identity only, ignoring pixel content.
    struct IdScorer;

    impl Scorer for IdScorer {
        fn score(&self, _image: &ImageTensor, sample_id: &str) -> Result<f64> {
            Ok(sample_id.len() as f64)
        }
    }

    fn images() -> Vec<LabeledImage> {
        (0..6)
            .map(|i| LabeledImage {
                sample_id: "x".repeat(i + 1),
                label: if i % 2 == 0 { Label::Natural } else { Label::Generated },
                source_id: String::new(),
                image: ImageTensor::filled(8, 8, [0.1 * i as f32, 0.5, 0.9 - 0.1 * i as f32]).unwrap(),
            })
            .collect()
    }

    #[test]
    fn identity_only_matches_unperturbed() {
        let scorer = ConvScorer {
            backend: &MeanEmbedder,
            config: DetectorConfig {
                rounds: 3,
                ..DetectorConfig::default()
            },
        };
        let imgs = images();
        let base = score_images(&scorer, &imgs, 1).unwrap();
        let rows = robustness_sweep(&scorer, &imgs, &[PerturbationSpec::Identity], 0, 1).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].auroc, auroc(&base).unwrap());
        assert_eq!(rows[0].ap, average_precision(&base).unwrap());
    }

    #[test]
    fn invariant_scorer_is_flat() {
        let grid = [
            PerturbationSpec::GaussianNoise { sigma: 0.0 },
            PerturbationSpec::GaussianNoise { sigma: 0.05 },
            PerturbationSpec::GaussianNoise { sigma: 0.1 },
        ];
        let rows = robustness_sweep(&IdScorer, &images(), &grid, 3, 2).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.auroc == rows[0].auroc && r.ap == rows[0].ap));
    }

    #[test]
    fn jobs_do_not_change_results() {
        let scorer = ConvScorer {
            backend: &MeanEmbedder,
            config: DetectorConfig {
                rounds: 2,
                ..DetectorConfig::default()
            },
        };
        let grid = [PerturbationSpec::Jpeg { quality: 50 }];
        let a = robustness_sweep(&scorer, &images(), &grid, 1, 1).unwrap();
        let b = robustness_sweep(&scorer, &images(), &grid, 1, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_grid_is_an_error() {
        assert!(robustness_sweep(&IdScorer, &images(), &[], 0, 1).is_err());
    }
}
