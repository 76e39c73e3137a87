//! Feature vectors `r = phi(x)` and everything needed to produce or persist them.
//!
//! Downstream math only ever sees [`FeatureVector`]s, so a dataset can be
//! embedded once (here or by an external exporter) and scored many times.

mod feature_file;
mod image;
#[cfg(feature = "onnx")]
mod onnx;
mod store;

use serde::{Deserialize, Serialize};

use crate::error::{ConvError, Result};

pub use self::feature_file::{
    load_feature_file, read_feature_set, save_feature_file, write_feature_set, FEATURE_MAGIC,
    FEATURE_VERSION, HEADER_LEN,
};
pub use self::image::{preprocess, preprocess_dynamic, CropMode, ImageTensor, PreprocessOptions};
#[cfg(feature = "onnx")]
pub use self::onnx::OnnxBackend;
pub use self::store::FeatureStore;

/// Tolerance on `| ||r||_2 - 1 |` for vectors flagged as normalized.
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Natural,
    Generated,
}

impl Label {
    pub fn is_generated(self) -> bool {
        self == Label::Generated
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Natural => "natural",
            Label::Generated => "generated",
        }
    }
}

impl std::str::FromStr for Label {
    type Err = ConvError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "natural" | "real" | "0" => Ok(Label::Natural),
            "generated" | "fake" | "1" => Ok(Label::Generated),
            other => Err(ConvError::InvalidInput(format!("unknown label `{other}`"))),
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A backbone embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    values: Vec<f32>,
    normalized: bool,
}

impl FeatureVector {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(ConvError::InvalidInput("empty feature vector".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ConvError::InvalidInput(format!(
                "feature component {i} is not finite"
            )));
        }
        Ok(FeatureVector {
            values,
            normalized: false,
        })
    }

    /// Rebuild a vector with an explicit normalization flag, checking the flag holds.
    pub fn with_flag(values: Vec<f32>, normalized: bool) -> Result<Self> {
        let mut v = FeatureVector::new(values)?;
        if normalized {
            let norm = v.norm();
            if (norm - 1.0).abs() >= NORM_TOLERANCE {
                return Err(ConvError::InvalidInput(format!(
                    "vector flagged normalized has norm {norm}"
                )));
            }
        }
        v.normalized = normalized;
        Ok(v)
    }

    pub fn from_f64(values: &[f64]) -> Result<Self> {
        FeatureVector::new(values.iter().map(|&v| v as f32).collect())
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt()
    }

    /// Scale to unit L2 norm.
    pub fn l2_normalized(self) -> Result<Self> {
        let norm = self.norm();
        if norm == 0.0 {
            return Err(ConvError::Degenerate("cannot normalize a zero vector".into()));
        }
        let values = self
            .values
            .iter()
            .map(|&v| ((v as f64) / norm) as f32)
            .collect();
        Ok(FeatureVector {
            values,
            normalized: true,
        })
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }
}

/// One row of a [`FeatureSet`].
///
/// `view` is 0 for the untransformed image and `i >= 1` for the features of
/// the `i`-th transformed copy of the same `sample_id`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRow {
    pub vector: FeatureVector,
    pub label: Label,
    pub source_id: String,
    pub sample_id: String,
    pub view: u32,
}

/// Labelled vectors from one backbone, all of the same dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    backbone_id: String,
    dim: usize,
    rows: Vec<FeatureRow>,
}

impl FeatureSet {
    pub fn new(backbone_id: impl Into<String>, dim: usize) -> Self {
        FeatureSet {
            backbone_id: backbone_id.into(),
            dim,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: FeatureRow) -> Result<()> {
        if row.vector.dim() != self.dim {
            return Err(ConvError::InvalidInput(format!(
                "row `{}` has dimension {}, set has {}",
                row.sample_id,
                row.vector.dim(),
                self.dim
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn backbone_id(&self) -> &str {
        &self.backbone_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[FeatureRow] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<FeatureRow> {
        self.rows
    }

    /// Rows with `view == 0`.
    pub fn originals(&self) -> impl Iterator<Item = &FeatureRow> {
        self.rows.iter().filter(|r| r.view == 0)
    }
}

/// Sidecar `<model>.manifest.json` shipped next to an exported backbone graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackboneManifest {
    #[serde(default)]
    pub backbone_id: Option<String>,
    pub input_size: usize,
    pub mean: [f32; 3],
    pub std: [f32; 3],
    pub output_dim: usize,
}

impl BackboneManifest {
    pub fn sidecar_path(model: &std::path::Path) -> std::path::PathBuf {
        let mut name = model.as_os_str().to_owned();
        name.push(".manifest.json");
        std::path::PathBuf::from(name)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ConvError::from(e).in_file(path))?;
        let manifest: BackboneManifest =
            serde_json::from_str(&text).map_err(|e| ConvError::from(e).in_file(path))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.output_dim == 0 {
            return Err(ConvError::InvalidInput(
                "manifest input_size and output_dim must be positive".into(),
            ));
        }
        if self.std.iter().any(|&s| !(s.is_finite() && s > 0.0))
            || self.mean.iter().any(|m| !m.is_finite())
        {
            return Err(ConvError::InvalidInput(
                "manifest mean/std must be finite with std > 0".into(),
            ));
        }
        Ok(())
    }
}

/// A frozen feature extractor over preprocessed images.
///
/// Implementations must be deterministic: identical input tensors give
/// bit-identical vectors.
pub trait Embedder: Send + Sync {
    fn backbone_id(&self) -> &str;
    fn input_size(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn embed(&self, image: &ImageTensor) -> Result<FeatureVector>;
}

impl<E: Embedder + ?Sized> Embedder for &E {
    fn backbone_id(&self) -> &str {
        (**self).backbone_id()
    }
    fn input_size(&self) -> usize {
        (**self).input_size()
    }
    fn output_dim(&self) -> usize {
        (**self).output_dim()
    }
    fn embed(&self, image: &ImageTensor) -> Result<FeatureVector> {
        (**self).embed(image)
    }
}

impl<E: Embedder + ?Sized> Embedder for Box<E> {
    fn backbone_id(&self) -> &str {
        (**self).backbone_id()
    }
    fn input_size(&self) -> usize {
        (**self).input_size()
    }
    fn output_dim(&self) -> usize {
        (**self).output_dim()
    }
    fn embed(&self, image: &ImageTensor) -> Result<FeatureVector> {
        (**self).embed(image)
    }
}
