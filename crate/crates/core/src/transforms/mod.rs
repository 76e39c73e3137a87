//! The manifold-preserving transformation `h` and robustness perturbations.
//!
//! `h` is a random horizontal flip, a color jitter, and a Gaussian blur,
//! matching the augmentations the backbone saw during self-supervised
//! training. Every draw is a pure function of `(spec, seed)`.

mod blur;
mod color;
mod perturb;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embeddings::ImageTensor;
use crate::error::{ConvError, Result};

pub use self::blur::{gaussian_blur, gaussian_kernel};
pub use self::color::{adjust_brightness, adjust_contrast, adjust_hue, adjust_saturation, flip_horizontal};
pub use self::perturb::{perturb, PerturbationSpec};

/// Closed interval `[low, high]` a jitter factor is drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct FactorRange {
    pub low: f64,
    pub high: f64,
}

impl FactorRange {
    pub const fn new(low: f64, high: f64) -> Self {
        FactorRange { low, high }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.low <= v && v <= self.high
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.low + self.high)
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        // Always consume one draw so the stream layout does not depend on the ranges.
        let v = rng.random_range(self.low..=self.high);
        if self.low == self.high {
            self.low
        } else {
            v
        }
    }
}

impl From<[f64; 2]> for FactorRange {
    fn from([low, high]: [f64; 2]) -> Self {
        FactorRange { low, high }
    }
}

impl From<FactorRange> for [f64; 2] {
    fn from(r: FactorRange) -> Self {
        [r.low, r.high]
    }
}

/// How the hue factor acts on the HSV hue channel (`h` in `[0, 1)`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HueMode {
    /// `h' = (h * factor) mod 1`
    #[default]
    Multiplicative,
    /// `h' = (h + factor - 1) mod 1`
    Shift,
}

/// How the blur range is read.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlurParameter {
    /// The drawn value is the standard deviation.
    #[default]
    StdDev,
    /// The drawn value is the variance; sigma is its square root.
    Variance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformSpec {
    pub flip_prob: f64,
    pub brightness: FactorRange,
    pub contrast: FactorRange,
    pub saturation: FactorRange,
    pub hue: FactorRange,
    pub blur_kernel: usize,
    pub blur_sigma: FactorRange,
    pub hue_mode: HueMode,
    pub blur_parameter: BlurParameter,
}

impl Default for TransformSpec {
    fn default() -> Self {
        TransformSpec {
            flip_prob: 0.5,
            brightness: FactorRange::new(0.88, 1.12),
            contrast: FactorRange::new(0.88, 1.12),
            saturation: FactorRange::new(0.94, 1.06),
            hue: FactorRange::new(0.97, 1.03),
            blur_kernel: 9,
            blur_sigma: FactorRange::new(0.7, 1.0),
            hue_mode: HueMode::Multiplicative,
            blur_parameter: BlurParameter::StdDev,
        }
    }
}

impl TransformSpec {
    /// A spec whose every draw leaves the image untouched. A zero blur sigma
    /// disables the blur stage.
    pub fn identity() -> Self {
        TransformSpec {
            flip_prob: 0.0,
            brightness: FactorRange::new(1.0, 1.0),
            contrast: FactorRange::new(1.0, 1.0),
            saturation: FactorRange::new(1.0, 1.0),
            hue: FactorRange::new(1.0, 1.0),
            blur_sigma: FactorRange::new(0.0, 0.0),
            ..TransformSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(ConvError::InvalidInput(format!(
                "flip_prob {} outside [0, 1]",
                self.flip_prob
            )));
        }
        for (name, r) in [
            ("brightness", self.brightness),
            ("contrast", self.contrast),
            ("saturation", self.saturation),
            ("hue", self.hue),
            ("blur_sigma", self.blur_sigma),
        ] {
            if !(r.low.is_finite() && r.high.is_finite() && r.low <= r.high) {
                return Err(ConvError::InvalidInput(format!(
                    "{name} range [{}, {}] is not a valid interval",
                    r.low, r.high
                )));
            }
            if r.low < 0.0 {
                return Err(ConvError::InvalidInput(format!("{name} range must be non-negative")));
            }
        }
        if self.blur_kernel < 3 || self.blur_kernel % 2 == 0 {
            return Err(ConvError::InvalidInput(format!(
                "blur kernel {} must be odd and at least 3",
                self.blur_kernel
            )));
        }
        Ok(())
    }
}

/// One concrete draw of `h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformSample {
    pub flip: bool,
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub hue: f64,
    /// Standard deviation of the blur; zero skips the blur stage.
    pub blur_sigma: f64,
    pub blur_kernel: usize,
    pub hue_mode: HueMode,
    pub seed: u64,
}

impl TransformSample {
    pub fn is_identity(&self) -> bool {
        !self.flip
            && self.brightness == 1.0
            && self.contrast == 1.0
            && self.saturation == 1.0
            && self.hue == 1.0
            && self.blur_sigma == 0.0
    }
}

/// Draw `h` from `spec` deterministically. Fields are drawn in a fixed order:
/// flip, brightness, contrast, saturation, hue, blur.
pub fn draw_transform(spec: &TransformSpec, seed: u64) -> TransformSample {
    let mut rng = crate::seed::rng(seed);
    let flip = rng.random::<f64>() < spec.flip_prob;
    let brightness = spec.brightness.draw(&mut rng);
    let contrast = spec.contrast.draw(&mut rng);
    let saturation = spec.saturation.draw(&mut rng);
    let hue = spec.hue.draw(&mut rng);
    let blur = spec.blur_sigma.draw(&mut rng);
    let blur_sigma = match spec.blur_parameter {
        BlurParameter::StdDev => blur,
        BlurParameter::Variance => blur.sqrt(),
    };
    TransformSample {
        flip,
        brightness,
        contrast,
        saturation,
        hue,
        blur_sigma,
        blur_kernel: spec.blur_kernel,
        hue_mode: spec.hue_mode,
        seed,
    }
}

/// Apply a drawn transform: flip, then brightness, contrast, saturation, hue,
/// then blur. Stages whose factor is exactly neutral are skipped, so the
/// identity sample returns the input bit for bit.
pub fn apply_transform(image: &ImageTensor, sample: &TransformSample) -> ImageTensor {
    let mut out = image.clone();
    if sample.flip {
        flip_horizontal(&mut out);
    }
    if sample.brightness != 1.0 {
        adjust_brightness(&mut out, sample.brightness);
    }
    if sample.contrast != 1.0 {
        adjust_contrast(&mut out, sample.contrast);
    }
    if sample.saturation != 1.0 {
        adjust_saturation(&mut out, sample.saturation);
    }
    if sample.hue != 1.0 {
        adjust_hue(&mut out, sample.hue, sample.hue_mode);
    }
    if sample.blur_sigma > 0.0 {
        out = gaussian_blur(&out, sample.blur_kernel, sample.blur_sigma);
    }
    out
}
