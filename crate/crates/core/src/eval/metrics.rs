//! Ranking metrics with generated as the positive class.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::detector::{balanced_accuracy, select_threshold};
use crate::embeddings::Label;
use crate::error::{ConvError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub sample_id: String,
    pub score: f64,
    pub label: Label,
    #[serde(default)]
    pub source_id: String,
}

impl ScoredSample {
    pub fn new(sample_id: impl Into<String>, score: f64, label: Label) -> Self {
        ScoredSample {
            sample_id: sample_id.into(),
            score,
            label,
            source_id: String::new(),
        }
    }

    pub fn with_source(mut self, source_id: impl Into<String>) -> Self {
        self.source_id = source_id.into();
        self
    }
}

/// Split scores by label, rejecting non-finite scores and single-class input.
pub fn split_by_label(samples: &[ScoredSample]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut natural = Vec::new();
    let mut generated = Vec::new();
    for s in samples {
        if !s.score.is_finite() {
            return Err(ConvError::InvalidInput(format!(
                "non-finite score for sample `{}`",
                s.sample_id
            )));
        }
        match s.label {
            Label::Natural => natural.push(s.score),
            Label::Generated => generated.push(s.score),
        }
    }
    if natural.is_empty() || generated.is_empty() {
        return Err(ConvError::InvalidInput(
            "metric needs both natural and generated samples".into(),
        ));
    }
    Ok((natural, generated))
}

pub fn auroc(samples: &[ScoredSample]) -> Result<f64> {
    let (natural, generated) = split_by_label(samples)?;
    auroc_scores(&natural, &generated)
}

/// `P(generated > natural) + P(tie) / 2`, from mid-ranks.
///
/// Counts are kept in units of half a pair so the result is an exact ratio of
/// two integers.
pub fn auroc_scores(natural: &[f64], generated: &[f64]) -> Result<f64> {
    if natural.is_empty() || generated.is_empty() {
        return Err(ConvError::InvalidInput(
            "AUROC needs both natural and generated scores".into(),
        ));
    }
    if natural.iter().chain(generated).any(|s| !s.is_finite()) {
        return Err(ConvError::InvalidInput("scores must be finite".into()));
    }
    let mut all: Vec<(f64, bool)> = natural
        .iter()
        .map(|&s| (s, false))
        .chain(generated.iter().map(|&s| (s, true)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Twice the rank sum of the positives, 1-based mid-ranks.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let positives = all[i..j].iter().filter(|e| e.1).count() as u128;
        // Mid-rank of positions i+1..=j is (i + 1 + j) / 2.
        twice_rank_sum += positives * (i as u128 + 1 + j as u128);
        i = j;
    }
    let np = generated.len() as u128;
    let nn = natural.len() as u128;
    let twice_u = twice_rank_sum - np * (np + 1);
    Ok(twice_u as f64 / (2 * np * nn) as f64)
}

/// Descending score, ties broken by ascending sample id.
pub fn ranking_order(a: &ScoredSample, b: &ScoredSample) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.sample_id.cmp(&b.sample_id))
}

/// Non-interpolated average precision: mean of precision@k over the ranks
/// `k` holding a positive.
pub fn average_precision(samples: &[ScoredSample]) -> Result<f64> {
    split_by_label(samples)?;
    let mut ranked: Vec<&ScoredSample> = samples.iter().collect();
    ranked.sort_by(|a, b| ranking_order(a, b));
    let positives = ranked.iter().filter(|s| s.label.is_generated()).count();
    let mut tp = 0usize;
    let mut sum = 0.0;
    for (k, s) in ranked.iter().enumerate() {
        if s.label.is_generated() {
            tp += 1;
            sum += tp as f64 / (k + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

/// Balanced accuracy at the automatically selected threshold.
pub fn accuracy_at_optimal_threshold(samples: &[ScoredSample]) -> Result<(f64, f64)> {
    let (natural, generated) = split_by_label(samples)?;
    let alpha = select_threshold(&natural, &generated)?;
    Ok((balanced_accuracy(&natural, &generated, alpha), alpha))
}

/// ROC step curve as `(fpr, tpr)` points from `(0,0)` to `(1,1)`. Tied scores
/// move diagonally in one step.
pub fn roc_curve(samples: &[ScoredSample]) -> Result<Vec<(f64, f64)>> {
    let (natural, generated) = split_by_label(samples)?;
    let mut ranked: Vec<(f64, bool)> = natural
        .iter()
        .map(|&s| (s, false))
        .chain(generated.iter().map(|&s| (s, true)))
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (nn, np) = (natural.len() as f64, generated.len() as f64);
    let mut points = vec![(0.0, 0.0)];
    let (mut fp, mut tp) = (0usize, 0usize);
    let mut i = 0;
    while i < ranked.len() {
        let mut j = i;
        while j < ranked.len() && ranked[j].0 == ranked[i].0 {
            if ranked[j].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        points.push((fp as f64 / nn, tp as f64 / np));
        i = j;
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(natural: &[f64], generated: &[f64]) -> Vec<ScoredSample> {
        let mut out = Vec::new();
        for (i, &s) in natural.iter().enumerate() {
            out.push(ScoredSample::new(format!("n{i}"), s, Label::Natural));
        }
        for (i, &s) in generated.iter().enumerate() {
            out.push(ScoredSample::new(format!("g{i}"), s, Label::Generated));
        }
        out
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&set(&[0.1, 0.2], &[0.8, 0.9])).unwrap(), 1.0);
        assert_eq!(auroc(&set(&[0.5, 0.5, 0.5], &[0.5, 0.5])).unwrap(), 0.5);
        assert_eq!(auroc(&set(&[0.2, 0.6], &[0.4, 0.8])).unwrap(), 0.75);
        assert_eq!(auroc(&set(&[0.9], &[0.1])).unwrap(), 0.0);
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&set(&[0.1, 0.2], &[0.8, 0.9])).unwrap(), 1.0);
        assert_eq!(average_precision(&set(&[0.5, 0.6, 0.7], &[0.1])).unwrap(), 0.25);
        // All tied: ids order g0 < g1 < n0 < n1, so both positives come first.
        assert_eq!(average_precision(&set(&[0.5, 0.5], &[0.5, 0.5])).unwrap(), 1.0);
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(auroc(&set(&[0.1, 0.2], &[])).is_err());
        assert!(average_precision(&set(&[], &[0.3])).is_err());
        assert!(accuracy_at_optimal_threshold(&set(&[0.1], &[])).is_err());
    }

    #[test]
    fn roc_unit_step_on_perfect_separation() {
        let roc = roc_curve(&set(&[0.1, 0.2], &[0.8, 0.9])).unwrap();
        assert_eq!(roc, vec![(0.0, 0.0), (0.0, 0.5), (0.0, 1.0), (0.5, 1.0), (1.0, 1.0)]);
    }

    #[test]
    fn optimal_accuracy() {
        let (acc, alpha) = accuracy_at_optimal_threshold(&set(&[0.1, 0.2], &[0.8, 0.9])).unwrap();
        assert_eq!(acc, 1.0);
        assert_eq!(alpha, 0.5);
    }
}
