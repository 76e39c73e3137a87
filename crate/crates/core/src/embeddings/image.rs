use image::{DynamicImage, RgbImage};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConvError, Result};

/// An RGB image in planar (CHW) layout with values in `[0, 1]`.
///
/// Channel normalization by backbone mean/std happens inside the backbone at
/// embed time, so tensors stay in pixel space and transforms can act on them
/// directly.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl ImageTensor {
    pub const CHANNELS: usize = 3;

    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(ConvError::InvalidInput("zero-sized image".into()));
        }
        if data.len() != Self::CHANNELS * height * width {
            return Err(ConvError::InvalidInput(format!(
                "expected {} values for a {height}x{width} RGB image, got {}",
                Self::CHANNELS * height * width,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(ConvError::InvalidInput(format!("pixel value {i} is not finite")));
        }
        Ok(ImageTensor {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Result<Self> {
        let mut data = Vec::with_capacity(3 * height * width);
        for c in rgb {
            data.extend(std::iter::repeat_n(c, height * width));
        }
        ImageTensor::new(height, width, data)
    }

    pub fn from_rgb8(img: &RgbImage) -> Result<Self> {
        let (w, h) = img.dimensions();
        let (w, h) = (w as usize, h as usize);
        let plane = w * h;
        let mut data = vec![0f32; 3 * plane];
        for (x, y, p) in img.enumerate_pixels() {
            let idx = y as usize * w + x as usize;
            for c in 0..3 {
                data[c * plane + idx] = p[c] as f32 / 255.0;
            }
        }
        ImageTensor::new(h, w, data)
    }

    /// Quantize to 8-bit RGB (round to nearest, clamp to `[0, 255]`).
    pub fn to_rgb8(&self) -> RgbImage {
        let plane = self.height * self.width;
        RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let idx = y as usize * self.width + x as usize;
            let q = |c: usize| (self.data[c * plane + idx].clamp(0.0, 1.0) * 255.0).round() as u8;
            image::Rgb([q(0), q(1), q(2)])
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn plane(&self, channel: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[channel * n..(channel + 1) * n]
    }

    pub fn plane_mut(&mut self, channel: usize) -> &mut [f32] {
        let n = self.height * self.width;
        &mut self.data[channel * n..(channel + 1) * n]
    }

    pub fn get(&self, channel: usize, y: usize, x: usize) -> f32 {
        self.data[(channel * self.height + y) * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum CropMode {
    /// Resize the shorter side to the input size, then take the central square.
    Center,
    /// Take a seeded random square window, resizing first only when the image
    /// is smaller than the input size. Meant for dataset preparation.
    Random { seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessOptions {
    pub input_size: usize,
    pub crop: CropMode,
}

impl PreprocessOptions {
    pub fn center(input_size: usize) -> Self {
        PreprocessOptions {
            input_size,
            crop: CropMode::Center,
        }
    }
}

/// Bring an 8-bit RGB image to the backbone's square input size.
pub fn preprocess(raw: &RgbImage, options: &PreprocessOptions) -> Result<ImageTensor> {
    let size = options.input_size;
    if size == 0 {
        return Err(ConvError::InvalidInput("input size must be positive".into()));
    }
    let tensor = ImageTensor::from_rgb8(raw)?;
    let short = tensor.height.min(tensor.width);
    match options.crop {
        CropMode::Center => {
            let resized = resize_shorter_side(&tensor, size);
            let top = (resized.height - size) / 2;
            let left = (resized.width - size) / 2;
            Ok(crop(&resized, top, left, size))
        }
        CropMode::Random { seed } => {
            let base = if short < size {
                resize_shorter_side(&tensor, size)
            } else {
                tensor
            };
            let mut rng = crate::seed::rng(seed);
            let top = rng.random_range(0..=base.height - size);
            let left = rng.random_range(0..=base.width - size);
            Ok(crop(&base, top, left, size))
        }
    }
}

/// Like [`preprocess`] but accepts a decoded image of any color type, rejecting
/// anything that is not three-channel RGB.
pub fn preprocess_dynamic(raw: &DynamicImage, options: &PreprocessOptions) -> Result<ImageTensor> {
    match raw {
        DynamicImage::ImageRgb8(img) => preprocess(img, options),
        DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgb32F(_) => {
            preprocess(&raw.to_rgb8(), options)
        }
        other => Err(ConvError::InvalidInput(format!(
            "expected an RGB image, got {:?}",
            other.color()
        ))),
    }
}

fn resize_shorter_side(img: &ImageTensor, size: usize) -> ImageTensor {
    let (h, w) = (img.height, img.width);
    if h.min(w) == size {
        return img.clone();
    }
    // Shorter side lands exactly on `size`; the longer side keeps the aspect ratio.
    let (out_h, out_w) = if h <= w {
        (size, ((w as f64) * size as f64 / h as f64).round().max(size as f64) as usize)
    } else {
        (((h as f64) * size as f64 / w as f64).round().max(size as f64) as usize, size)
    };
    resize_bilinear(img, out_h, out_w)
}

/// Bilinear resampling with half-pixel centers and edge clamping.
pub(crate) fn resize_bilinear(img: &ImageTensor, out_h: usize, out_w: usize) -> ImageTensor {
    let (h, w) = (img.height, img.width);
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    let taps = |out: usize, scale: f64, len: usize| -> Vec<(usize, usize, f32)> {
        (0..out)
            .map(|o| {
                let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
                let i0 = src.floor() as usize;
                let i1 = (i0 + 1).min(len - 1);
                (i0, i1, (src - i0 as f64) as f32)
            })
            .collect()
    };
    let ty = taps(out_h, sy, h);
    let tx = taps(out_w, sx, w);
    let mut data = Vec::with_capacity(3 * out_h * out_w);
    for c in 0..3 {
        let plane = img.plane(c);
        for &(y0, y1, fy) in &ty {
            for &(x0, x1, fx) in &tx {
                let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
                let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
                data.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    ImageTensor {
        height: out_h,
        width: out_w,
        data,
    }
}

fn crop(img: &ImageTensor, top: usize, left: usize, size: usize) -> ImageTensor {
    if top == 0 && left == 0 && img.height == size && img.width == size {
        return img.clone();
    }
    let mut data = Vec::with_capacity(3 * size * size);
    for c in 0..3 {
        let plane = img.plane(c);
        for y in top..top + size {
            data.extend_from_slice(&plane[y * img.width + left..y * img.width + left + size]);
        }
    }
    ImageTensor {
        height: size,
        width: size,
        data,
    }
}
