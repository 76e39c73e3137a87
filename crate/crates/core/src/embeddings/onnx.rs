use std::path::Path;
use std::sync::Arc;

use tract_onnx::prelude::*;

use super::{BackboneManifest, Embedder, FeatureVector, ImageTensor};
use crate::error::{ConvError, Result};

type Plan = Arc<TypedRunnableModel>;

/// ONNX graph backend. Expects a graph mapping `(1, 3, S, S)` to `(1, D)`.
pub struct OnnxBackend {
    plan: Plan,
    manifest: BackboneManifest,
    backbone_id: String,
    output_dim: usize,
    normalize: bool,
}

impl std::fmt::Debug for OnnxBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OnnxBackend")
            .field("backbone_id", &self.backbone_id)
            .field("input_size", &self.manifest.input_size)
            .field("output_dim", &self.output_dim)
            .field("normalize", &self.normalize)
            .finish()
    }
}

fn backend_err(context: &str) -> impl Fn(TractError) -> ConvError + '_ {
    move |e| ConvError::Backend(format!("{context}: {e:#}"))
}

impl OnnxBackend {
    /// Load `model` and its `<model>.manifest.json` sidecar.
    pub fn load(model: &Path) -> Result<Self> {
        let manifest = BackboneManifest::load(&BackboneManifest::sidecar_path(model))?;
        let bytes = std::fs::read(model).map_err(|e| ConvError::from(e).in_file(model))?;
        let default_id = model
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "onnx".into());
        Self::from_bytes(&bytes, manifest, default_id)
    }

    pub fn from_bytes(bytes: &[u8], manifest: BackboneManifest, default_id: String) -> Result<Self> {
        manifest.validate()?;
        let s = manifest.input_size;
        let typed = tract_onnx::onnx()
            .model_for_read(&mut std::io::Cursor::new(bytes))
            .map_err(backend_err("graph load failed"))?
            .with_input_fact(0, f32::fact([1, 3, s, s]).into())
            .map_err(backend_err("input shape rejected"))?
            .into_optimized()
            .map_err(backend_err("graph optimization failed"))?;
        let fact = typed.output_fact(0).map_err(backend_err("graph has no output"))?;
        let shape = fact
            .shape
            .as_concrete()
            .ok_or_else(|| ConvError::Backend(format!("output shape {:?} is symbolic", fact.shape)))?
            .to_vec();
        let output_dim = match shape.as_slice() {
            [1, d] | [d] => *d,
            other => {
                return Err(ConvError::Backend(format!(
                    "expected a (1, D) pooled output, graph declares {other:?}"
                )))
            }
        };
        if output_dim != manifest.output_dim {
            return Err(ConvError::Backend(format!(
                "graph output dimension {output_dim} disagrees with manifest output_dim {}",
                manifest.output_dim
            )));
        }
        let plan = typed.into_runnable().map_err(backend_err("plan construction failed"))?;
        let backbone_id = manifest.backbone_id.clone().unwrap_or(default_id);
        Ok(OnnxBackend {
            plan,
            manifest,
            backbone_id,
            output_dim,
            normalize: true,
        })
    }

    /// Disable or enable L2 normalization of the output (enabled by default).
    pub fn with_normalization(mut self, normalize: bool) -> Self {
        self.normalize = normalize;
        self
    }

    pub fn manifest(&self) -> &BackboneManifest {
        &self.manifest
    }
}

impl Embedder for OnnxBackend {
    fn backbone_id(&self) -> &str {
        &self.backbone_id
    }

    fn input_size(&self) -> usize {
        self.manifest.input_size
    }

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn embed(&self, image: &ImageTensor) -> Result<FeatureVector> {
        let s = self.manifest.input_size;
        if image.height() != s || image.width() != s {
            return Err(ConvError::Backend(format!(
                "image is {}x{}, backbone expects {s}x{s}",
                image.height(),
                image.width()
            )));
        }
        let mut input = Vec::with_capacity(3 * s * s);
        for c in 0..3 {
            let (m, sd) = (self.manifest.mean[c], self.manifest.std[c]);
            input.extend(image.plane(c).iter().map(|&v| (v - m) / sd));
        }
        let tensor = Tensor::from_shape(&[1, 3, s, s], &input)
            .map_err(backend_err("input tensor construction failed"))?;
        let outputs = self
            .plan
            .run(tvec!(tensor.into()))
            .map_err(backend_err("inference failed"))?;
        let view = outputs[0]
            .to_plain_array_view::<f32>()
            .map_err(backend_err("output is not f32"))?;
        let values: Vec<f32> = view.iter().copied().collect();
        if values.len() != self.output_dim {
            return Err(ConvError::Backend(format!(
                "inference produced {} values, expected {}",
                values.len(),
                self.output_dim
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ConvError::Backend("inference produced non-finite features".into()));
        }
        let vector = FeatureVector::new(values)?;
        if self.normalize {
            vector.l2_normalized()
        } else {
            Ok(vector)
        }
    }
}
