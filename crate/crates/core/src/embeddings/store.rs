use std::collections::HashMap;

use super::{FeatureRow, FeatureSet, FeatureVector};
use crate::error::{ConvError, Result};

/// Feature-file lookup backend: serves precomputed vectors by sample id and view.
#[derive(Clone, Debug)]
pub struct FeatureStore {
    set: FeatureSet,
    index: HashMap<(String, u32), usize>,
}

impl FeatureStore {
    pub fn new(set: FeatureSet) -> Result<Self> {
        let mut index = HashMap::with_capacity(set.len());
        for (i, row) in set.rows().iter().enumerate() {
            if index.insert((row.sample_id.clone(), row.view), i).is_some() {
                return Err(ConvError::InvalidInput(format!(
                    "duplicate entry for sample `{}` view {}",
                    row.sample_id, row.view
                )));
            }
        }
        Ok(FeatureStore { set, index })
    }

    pub fn backbone_id(&self) -> &str {
        self.set.backbone_id()
    }

    pub fn output_dim(&self) -> usize {
        self.set.dim()
    }

    pub fn set(&self) -> &FeatureSet {
        &self.set
    }

    /// The untransformed vector stored for `key`.
    pub fn lookup(&self, key: &str) -> Result<&FeatureVector> {
        self.lookup_view(key, 0)
    }

    pub fn lookup_view(&self, key: &str, view: u32) -> Result<&FeatureVector> {
        self.row(key, view).map(|r| &r.vector)
    }

    pub fn row(&self, key: &str, view: u32) -> Result<&FeatureRow> {
        self.index
            .get(&(key.to_string(), view))
            .map(|&i| &self.set.rows()[i])
            .ok_or_else(|| {
                ConvError::Backend(format!("no stored features for `{key}` view {view}"))
            })
    }

    /// Number of transformed views stored for `key` (views 1, 2, ... contiguous).
    pub fn view_count(&self, key: &str) -> usize {
        let mut n = 0u32;
        while self.index.contains_key(&(key.to_string(), n + 1)) {
            n += 1;
        }
        n as usize
    }

    /// Distinct sample ids that have an original (view 0) row, in file order.
    pub fn sample_ids(&self) -> Vec<&str> {
        self.set.originals().map(|r| r.sample_id.as_str()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::Label;

    fn store() -> FeatureStore {
        let mut set = FeatureSet::new("b", 2);
        for (id, view, v) in [("img_0007", 0, [0.25, -3.5]), ("img_0007", 1, [1.0, 0.0]), ("img_0008", 0, [2.0, 2.0])] {
            set.push(FeatureRow {
                vector: FeatureVector::new(v.to_vec()).unwrap(),
                label: Label::Natural,
                source_id: "s".into(),
                sample_id: id.into(),
                view,
            })
            .unwrap();
        }
        FeatureStore::new(set).unwrap()
    }

    #[test]
    fn lookup_returns_stored_vector_verbatim() {
        let s = store();
        assert_eq!(s.lookup("img_0007").unwrap().values(), &[0.25, -3.5]);
        assert_eq!(s.view_count("img_0007"), 1);
        assert_eq!(s.view_count("img_0008"), 0);
    }

    #[test]
    fn missing_key_is_backend_error() {
        assert!(matches!(store().lookup("nope"), Err(ConvError::Backend(_))));
    }

    #[test]
    fn duplicates_rejected() {
        let mut set = FeatureSet::new("b", 1);
        for _ in 0..2 {
            set.push(FeatureRow {
                vector: FeatureVector::new(vec![1.0]).unwrap(),
                label: Label::Natural,
                source_id: "s".into(),
                sample_id: "a".into(),
                view: 0,
            })
            .unwrap();
        }
        assert!(FeatureStore::new(set).is_err());
    }
}
