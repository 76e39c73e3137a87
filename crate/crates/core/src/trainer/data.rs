use std::collections::BTreeMap;

use crate::embeddings::{FeatureSet, Label};
use crate::error::{ConvError, Result};

/// One source image: its feature and the features of its transformed views.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSample {
    pub sample_id: String,
    pub label: Label,
    pub original: Vec<f64>,
    pub views: Vec<Vec<f64>>,
}

/// Training pairs grouped by source image, so a validation split never
/// separates an image from its views.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainData {
    dim: usize,
    samples: Vec<TrainSample>,
}

impl TrainData {
    pub fn new(dim: usize) -> Self {
        TrainData {
            dim,
            samples: Vec::new(),
        }
    }

    pub fn push(&mut self, sample: TrainSample) -> Result<()> {
        if sample.views.is_empty() {
            return Err(ConvError::InvalidInput(format!(
                "sample `{}` has no transformed views",
                sample.sample_id
            )));
        }
        for row in std::iter::once(&sample.original).chain(&sample.views) {
            if row.len() != self.dim {
                return Err(ConvError::InvalidInput(format!(
                    "sample `{}` has dimension {}, expected {}",
                    sample.sample_id,
                    row.len(),
                    self.dim
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(ConvError::InvalidInput(format!(
                    "sample `{}` has non-finite features",
                    sample.sample_id
                )));
            }
        }
        self.samples.push(sample);
        Ok(())
    }

    /// Collect samples from feature sets. View 0 of each sample id is the
    /// original; views `1..` are its transformed counterparts. Samples with no
    /// views are skipped.
    pub fn from_feature_sets(sets: &[&FeatureSet]) -> Result<Self> {
        let first = sets
            .first()
            .ok_or_else(|| ConvError::InvalidInput("no feature sets given".into()))?;
        let mut data = TrainData::new(first.dim());
        for set in sets {
            if set.dim() != data.dim {
                return Err(ConvError::InvalidInput(format!(
                    "feature sets disagree on dimension ({} vs {})",
                    data.dim,
                    set.dim()
                )));
            }
            let mut grouped: BTreeMap<&str, (Option<usize>, Vec<(u32, usize)>)> = BTreeMap::new();
            for (i, row) in set.rows().iter().enumerate() {
                let entry = grouped.entry(row.sample_id.as_str()).or_default();
                if row.view == 0 {
                    if entry.0.replace(i).is_some() {
                        return Err(ConvError::InvalidInput(format!(
                            "duplicate original for sample `{}`",
                            row.sample_id
                        )));
                    }
                } else {
                    entry.1.push((row.view, i));
                }
            }
            let mut skipped = 0usize;
            for (id, (original, mut views)) in grouped {
                let Some(o) = original else {
                    return Err(ConvError::InvalidInput(format!(
                        "sample `{id}` has views but no original"
                    )));
                };
                if views.is_empty() {
                    skipped += 1;
                    continue;
                }
                views.sort_unstable();
                let rows = set.rows();
                data.push(TrainSample {
                    sample_id: id.to_string(),
                    label: rows[o].label,
                    original: rows[o].vector.to_f64(),
                    views: views.iter().map(|&(_, i)| rows[i].vector.to_f64()).collect(),
                })?;
            }
            if skipped > 0 {
                log::warn!("skipped {skipped} samples without transformed views");
            }
        }
        Ok(data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> &[TrainSample] {
        &self.samples
    }

    pub fn count(&self, label: Label) -> usize {
        self.samples.iter().filter(|s| s.label == label).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::{FeatureRow, FeatureVector};

    fn row(id: &str, view: u32, label: Label, x: f32) -> FeatureRow {
        FeatureRow {
            vector: FeatureVector::new(vec![x, 1.0]).unwrap(),
            label,
            source_id: "s".into(),
            sample_id: id.into(),
            view,
        }
    }

    #[test]
    fn groups_views_under_originals() {
        let mut set = FeatureSet::new("b", 2);
        set.push(row("a", 2, Label::Natural, 0.2)).unwrap();
        set.push(row("a", 0, Label::Natural, 0.0)).unwrap();
        set.push(row("a", 1, Label::Natural, 0.1)).unwrap();
        set.push(row("b", 0, Label::Generated, 5.0)).unwrap();
        set.push(row("c", 0, Label::Generated, 6.0)).unwrap();
        set.push(row("c", 1, Label::Generated, 6.5)).unwrap();
        let data = TrainData::from_feature_sets(&[&set]).unwrap();
        assert_eq!(data.samples().len(), 2);
        let a = &data.samples()[0];
        assert_eq!(a.original[0], 0.0);
        assert_eq!(a.views.len(), 2);
        assert!((a.views[0][0] - 0.1).abs() < 1e-6);
        assert_eq!(data.count(Label::Generated), 1);
    }

    #[test]
    fn views_without_original_are_rejected() {
        let mut set = FeatureSet::new("b", 2);
        set.push(row("a", 1, Label::Natural, 0.1)).unwrap();
        assert!(TrainData::from_feature_sets(&[&set]).is_err());
    }
}
