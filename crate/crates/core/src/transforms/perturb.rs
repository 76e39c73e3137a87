use std::fmt;
use std::io::Cursor;
use std::str::FromStr;

use image::codecs::jpeg::JpegEncoder;
use image::ImageFormat;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::gaussian_blur;
use crate::embeddings::ImageTensor;
use crate::error::{ConvError, Result};

/// A post-hoc degradation applied before scoring, for robustness sweeps.
///
/// String form: `none`, `jpeg:<q>`, `blur:<sigma>`, `noise:<sigma>`. Noise
/// sigma is on the `[0, 1]` pixel scale; blur sigma is in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerturbationSpec {
    Identity,
    Jpeg { quality: u8 },
    GaussianBlur { sigma: f64 },
    GaussianNoise { sigma: f64 },
}

impl PerturbationSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PerturbationSpec::Identity => Ok(()),
            PerturbationSpec::Jpeg { quality } if (1..=100).contains(&quality) => Ok(()),
            PerturbationSpec::Jpeg { quality } => Err(ConvError::InvalidInput(format!(
                "jpeg quality {quality} outside 1..=100"
            ))),
            PerturbationSpec::GaussianBlur { sigma } | PerturbationSpec::GaussianNoise { sigma }
                if sigma.is_finite() && sigma >= 0.0 =>
            {
                Ok(())
            }
            _ => Err(ConvError::InvalidInput(format!("invalid perturbation {self}"))),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PerturbationSpec::Identity => "none",
            PerturbationSpec::Jpeg { .. } => "jpeg",
            PerturbationSpec::GaussianBlur { .. } => "blur",
            PerturbationSpec::GaussianNoise { .. } => "noise",
        }
    }

    /// The single strength parameter: JPEG quality, or sigma. 0 for identity.
    pub fn level(&self) -> f64 {
        match *self {
            PerturbationSpec::Identity => 0.0,
            PerturbationSpec::Jpeg { quality } => quality as f64,
            PerturbationSpec::GaussianBlur { sigma } | PerturbationSpec::GaussianNoise { sigma } => sigma,
        }
    }

    /// Blur window for a perturbation sigma: `2 * ceil(3 sigma) + 1`, at least 3.
    pub fn blur_kernel(sigma: f64) -> usize {
        (2 * (3.0 * sigma).ceil() as usize + 1).max(3)
    }
}

impl fmt::Display for PerturbationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PerturbationSpec::Identity => write!(f, "none"),
            PerturbationSpec::Jpeg { quality } => write!(f, "jpeg:{quality}"),
            PerturbationSpec::GaussianBlur { sigma } => write!(f, "blur:{sigma}"),
            PerturbationSpec::GaussianNoise { sigma } => write!(f, "noise:{sigma}"),
        }
    }
}

impl FromStr for PerturbationSpec {
    type Err = ConvError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("none") || s.eq_ignore_ascii_case("identity") {
            return Ok(PerturbationSpec::Identity);
        }
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| ConvError::InvalidInput(format!("perturbation `{s}` needs kind:value")))?;
        let bad = || ConvError::InvalidInput(format!("bad perturbation level in `{s}`"));
        let spec = match kind.to_ascii_lowercase().as_str() {
            "jpeg" => PerturbationSpec::Jpeg {
                quality: value.parse().map_err(|_| bad())?,
            },
            "blur" => PerturbationSpec::GaussianBlur {
                sigma: value.parse().map_err(|_| bad())?,
            },
            "noise" => PerturbationSpec::GaussianNoise {
                sigma: value.parse().map_err(|_| bad())?,
            },
            other => {
                return Err(ConvError::InvalidInput(format!(
                    "unknown perturbation kind `{other}` (expected jpeg, blur or noise)"
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

pub fn perturb(image: &ImageTensor, spec: &PerturbationSpec, seed: u64) -> Result<ImageTensor> {
    spec.validate()?;
    match *spec {
        PerturbationSpec::Identity => Ok(image.clone()),
        PerturbationSpec::GaussianBlur { sigma } => Ok(gaussian_blur(
            image,
            PerturbationSpec::blur_kernel(sigma),
            sigma,
        )),
        PerturbationSpec::GaussianNoise { sigma } => {
            if sigma == 0.0 {
                return Ok(image.clone());
            }
            let normal = Normal::new(0.0f64, sigma)
                .map_err(|e| ConvError::Perturbation(format!("noise distribution: {e}")))?;
            let mut rng = crate::seed::rng(seed);
            let mut out = image.clone();
            for v in out.data_mut() {
                *v = ((*v as f64) + normal.sample(&mut rng)).clamp(0.0, 1.0) as f32;
            }
            Ok(out)
        }
        PerturbationSpec::Jpeg { quality } => jpeg_round_trip(image, quality),
    }
}

fn jpeg_round_trip(image: &ImageTensor, quality: u8) -> Result<ImageTensor> {
    let rgb = image.to_rgb8();
    let mut buf = Vec::new();
    JpegEncoder::new_with_quality(&mut buf, quality)
        .encode_image(&rgb)
        .map_err(|e| ConvError::Perturbation(format!("jpeg encode: {e}")))?;
    let decoded = image::load(Cursor::new(buf), ImageFormat::Jpeg)
        .map_err(|e| ConvError::Perturbation(format!("jpeg decode: {e}")))?;
    ImageTensor::from_rgb8(&decoded.to_rgb8())
}
