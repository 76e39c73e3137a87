//! Consistency scoring.
//!
//! For an image `x` the detector embeds `x` once and `h_i(x)` for `n`
//! independent draws of the transform, then scores
//! `1 - aggregate_i cos(phi(x), phi(h_i(x)))`. Higher means more likely generated.
//!
//! The cosine stands in for the self-supervised loss: the contrastive
//! objective the backbone was trained with is monotone in `r . r_h / tau`, so the
//! temperature and the negative samples drop out of the ranking.

use serde::{Deserialize, Serialize};

use crate::embeddings::{Embedder, FeatureStore, FeatureVector, ImageTensor, Label};
use crate::error::{ConvError, Result};
use crate::seed::derive_seed;
use crate::transforms::{apply_transform, draw_transform, TransformSpec};

/// Default number of transform rounds per image.
pub const DEFAULT_ROUNDS: usize = 20;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
    Min,
}

/// Serialized as the string `"auto"` or a bare number.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(into = "ThresholdRepr", try_from = "ThresholdRepr")]
pub enum Threshold {
    /// Pick the threshold that maximizes balanced accuracy on labelled scores.
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum ThresholdRepr {
    Fixed(f64),
    Named(String),
}

impl From<Threshold> for ThresholdRepr {
    fn from(t: Threshold) -> Self {
        match t {
            Threshold::Auto => ThresholdRepr::Named("auto".into()),
            Threshold::Fixed(v) => ThresholdRepr::Fixed(v),
        }
    }
}

impl TryFrom<ThresholdRepr> for Threshold {
    type Error = ConvError;

    fn try_from(r: ThresholdRepr) -> Result<Self> {
        match r {
            ThresholdRepr::Fixed(v) if v.is_finite() => Ok(Threshold::Fixed(v)),
            ThresholdRepr::Fixed(_) => Err(ConvError::InvalidInput("threshold must be finite".into())),
            ThresholdRepr::Named(s) => s.parse(),
        }
    }
}

impl std::fmt::Display for Threshold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Threshold::Auto => f.write_str("auto"),
            Threshold::Fixed(v) => write!(f, "{v}"),
        }
    }
}

impl std::str::FromStr for Threshold {
    type Err = ConvError;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Threshold::Auto);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| ConvError::InvalidInput(format!("threshold `{s}` is neither auto nor a number")))?;
        if !v.is_finite() {
            return Err(ConvError::InvalidInput("threshold must be finite".into()));
        }
        Ok(Threshold::Fixed(v))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub rounds: usize,
    pub transform: TransformSpec,
    pub threshold: Threshold,
    pub seed: u64,
    pub aggregation: Aggregation,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            rounds: DEFAULT_ROUNDS,
            transform: TransformSpec::default(),
            threshold: Threshold::Auto,
            seed: 0,
            aggregation: Aggregation::Mean,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(ConvError::InvalidInput("rounds must be at least 1".into()));
        }
        if let Threshold::Fixed(a) = self.threshold {
            if !a.is_finite() {
                return Err(ConvError::InvalidInput("threshold must be finite".into()));
            }
        }
        self.transform.validate()
    }

    /// Seed of the transform drawn in `round`.
    pub fn round_seed(&self, round: usize) -> u64 {
        derive_seed(self.seed, round as u64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyScore {
    pub sample_id: String,
    pub similarities: Vec<f64>,
    pub score: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Natural,
    Generated,
}

impl From<Verdict> for Label {
    fn from(v: Verdict) -> Label {
        match v {
            Verdict::Natural => Label::Natural,
            Verdict::Generated => Label::Generated,
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        Label::from(*self).fmt(f)
    }
}

/// Cosine similarity, computed in f64 and clamped to `[-1, 1]`.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(ConvError::InvalidInput(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(ConvError::Degenerate("cosine of a zero vector".into()));
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

pub fn similarity(r: &FeatureVector, r_h: &FeatureVector) -> Result<f64> {
    cosine(&r.to_f64(), &r_h.to_f64())
}

/// Aggregate per-round similarities into a score in `[0, 2]`.
pub fn score_from_similarities(
    sample_id: impl Into<String>,
    similarities: Vec<f64>,
    aggregation: Aggregation,
) -> Result<ConsistencyScore> {
    if similarities.is_empty() {
        return Err(ConvError::InvalidInput("no rounds to aggregate".into()));
    }
    let agg = match aggregation {
        Aggregation::Mean => similarities.iter().sum::<f64>() / similarities.len() as f64,
        Aggregation::Min => similarities.iter().copied().fold(f64::INFINITY, f64::min),
    };
    Ok(ConsistencyScore {
        sample_id: sample_id.into(),
        similarities,
        score: (1.0 - agg).clamp(0.0, 2.0),
    })
}

/// Score precomputed features: the original and one vector per transformed view.
pub fn score_from_features(
    sample_id: impl Into<String>,
    original: &FeatureVector,
    views: &[FeatureVector],
    aggregation: Aggregation,
) -> Result<ConsistencyScore> {
    let r = original.to_f64();
    let sims = views
        .iter()
        .enumerate()
        .map(|(i, v)| {
            cosine(&r, &v.to_f64()).map_err(|e| ConvError::Round {
                round: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    score_from_similarities(sample_id, sims, aggregation)
}

/// Embed `image` and `config.rounds` seeded transforms of it, and score the drift.
pub fn consistency_score<E: Embedder + ?Sized>(
    backend: &E,
    image: &ImageTensor,
    sample_id: &str,
    config: &DetectorConfig,
) -> Result<ConsistencyScore> {
    config.validate()?;
    let r = backend.embed(image)?.to_f64();
    let mut sims = Vec::with_capacity(config.rounds);
    for round in 0..config.rounds {
        let wrap = |e| ConvError::Round {
            round,
            source: Box::new(e),
        };
        let sample = draw_transform(&config.transform, config.round_seed(round));
        let transformed = apply_transform(image, &sample);
        let r_h = backend.embed(&transformed).map_err(wrap)?;
        sims.push(cosine(&r, &r_h.to_f64()).map_err(wrap)?);
    }
    score_from_similarities(sample_id, sims, config.aggregation)
}

/// Score a sample whose transformed views were embedded ahead of time.
/// Uses views `1..=config.rounds` from the store.
pub fn stored_consistency_score(
    store: &FeatureStore,
    sample_id: &str,
    config: &DetectorConfig,
) -> Result<ConsistencyScore> {
    if config.rounds == 0 {
        return Err(ConvError::InvalidInput("rounds must be at least 1".into()));
    }
    let original = store.lookup(sample_id)?;
    let available = store.view_count(sample_id);
    if available < config.rounds {
        return Err(ConvError::Backend(format!(
            "sample `{sample_id}` has {available} stored views, {} rounds requested",
            config.rounds
        )));
    }
    let views = (1..=config.rounds as u32)
        .map(|v| store.lookup_view(sample_id, v).cloned())
        .collect::<Result<Vec<_>>>()?;
    score_from_features(sample_id, original, &views, config.aggregation)
}

/// Generated iff `score > alpha`; ties go to natural.
pub fn detect(score: &ConsistencyScore, alpha: f64) -> Verdict {
    verdict(score.score, alpha)
}

pub fn verdict(score: f64, alpha: f64) -> Verdict {
    if score > alpha {
        Verdict::Generated
    } else {
        Verdict::Natural
    }
}

/// Balanced accuracy of the rule `score > alpha => generated`.
pub fn balanced_accuracy(natural: &[f64], generated: &[f64], alpha: f64) -> f64 {
    let tnr = natural.iter().filter(|&&s| s <= alpha).count() as f64 / natural.len() as f64;
    let tpr = generated.iter().filter(|&&s| s > alpha).count() as f64 / generated.len() as f64;
    0.5 * (tnr + tpr)
}

/// Threshold maximizing balanced accuracy.
///
/// Candidates are the midpoints of consecutive distinct scores plus the
/// largest score (everything natural, balanced accuracy 0.5). Ties go to the
/// smallest candidate.
pub fn select_threshold(natural: &[f64], generated: &[f64]) -> Result<f64> {
    if natural.is_empty() || generated.is_empty() {
        return Err(ConvError::InvalidInput(
            "threshold selection needs both natural and generated scores".into(),
        ));
    }
    let mut all: Vec<f64> = natural.iter().chain(generated).copied().collect();
    if all.iter().any(|s| !s.is_finite()) {
        return Err(ConvError::InvalidInput("scores must be finite".into()));
    }
    all.sort_by(f64::total_cmp);
    all.dedup();
    let mut candidates: Vec<f64> = all.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    candidates.push(*all.last().expect("non-empty"));
    candidates.sort_by(f64::total_cmp);

    let mut best = (f64::NEG_INFINITY, candidates[0]);
    for &alpha in &candidates {
        let acc = balanced_accuracy(natural, generated, alpha);
        if acc > best.0 {
            best = (acc, alpha);
        }
    }
    Ok(best.1)
}
