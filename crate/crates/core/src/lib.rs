//! Consistency verification for detecting generated images.
//!
//! A frozen self-supervised backbone maps an image to a feature vector. Natural
//! images sit on the data manifold the backbone was trained on, so their
//! features barely move under the augmentations used during that training.
//! Generated images sit slightly off the manifold and their features drift.
//! The detector scores that drift as `1 - cosine(phi(x), phi(h(x)))`,
//! averaged over several random draws of `h`.
//!
//! The crate is organised by subsystem:
//!
//! - [`embeddings`]: image preprocessing, backbones, and the binary feature file.
//! - [`transforms`]: the manifold-preserving augmentation `h` and robustness perturbations.
//! - [`detector`]: consistency scoring, verdicts and threshold selection.
//! - [`flow`]: a two-block affine-coupling normalizing flow over feature space.
//! - [`trainer`]: flow training with hand-written gradients and AdamW, plus the combined score.
//! - [`eval`]: AUROC / AP / accuracy, robustness sweeps and report emission.
//! - [`lab`]: synthetic manifolds with closed-form geometry for checking the theory numerically.

mod binio;
pub mod detector;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod flow;
pub mod lab;
pub mod parallel;
pub mod seed;
pub mod trainer;
pub mod transforms;

pub use detector::{
    consistency_score, detect, select_threshold, similarity, stored_consistency_score,
    Aggregation, ConsistencyScore, DetectorConfig, Threshold, Verdict,
};
pub use embeddings::{
    BackboneManifest, Embedder, FeatureRow, FeatureSet, FeatureStore, FeatureVector,
    ImageTensor, Label,
};
pub use error::{ConvError, Result};
pub use eval::{EvalReport, ScoredSample};
pub use flow::{Calibration, FlowConfig, FlowModel, LogProbResult};
pub use trainer::{LossValue, TrainBatch, TrainConfig, TrainData, TrainReport};
pub use transforms::{PerturbationSpec, TransformSample, TransformSpec};
