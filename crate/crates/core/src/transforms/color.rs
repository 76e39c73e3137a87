use super::HueMode;
use crate::embeddings::ImageTensor;

const LUMA: [f32; 3] = [0.299, 0.587, 0.114];

pub fn flip_horizontal(img: &mut ImageTensor) {
    let w = img.width();
    for c in 0..3 {
        for row in img.plane_mut(c).chunks_exact_mut(w) {
            row.reverse();
        }
    }
}

/// Multiplicative brightness: `x * factor`, clamped.
pub fn adjust_brightness(img: &mut ImageTensor, factor: f64) {
    let f = factor as f32;
    for v in img.data_mut() {
        *v = (*v * f).clamp(0.0, 1.0);
    }
}

fn luma_plane(img: &ImageTensor) -> Vec<f32> {
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    r.iter()
        .zip(g)
        .zip(b)
        .map(|((&r, &g), &b)| LUMA[0] * r + LUMA[1] * g + LUMA[2] * b)
        .collect()
}

fn blend(img: &mut ImageTensor, factor: f64, other: impl Fn(usize) -> f32) {
    let f = factor as f32;
    let n = img.height() * img.width();
    for c in 0..3 {
        for (i, v) in img.plane_mut(c).iter_mut().enumerate() {
            *v = (f * *v + (1.0 - f) * other(i)).clamp(0.0, 1.0);
        }
    }
    debug_assert_eq!(img.data().len(), 3 * n);
}

/// Blend toward the mean luma of the whole image.
pub fn adjust_contrast(img: &mut ImageTensor, factor: f64) {
    let luma = luma_plane(img);
    let mean = (luma.iter().map(|&v| v as f64).sum::<f64>() / luma.len() as f64) as f32;
    blend(img, factor, |_| mean);
}

/// Blend toward the per-pixel luma.
pub fn adjust_saturation(img: &mut ImageTensor, factor: f64) {
    let luma = luma_plane(img);
    blend(img, factor, |i| luma[i]);
}

pub fn adjust_hue(img: &mut ImageTensor, factor: f64, mode: HueMode) {
    let n = img.height() * img.width();
    let data = img.data_mut();
    for i in 0..n {
        let (h, s, v) = rgb_to_hsv(data[i], data[n + i], data[2 * n + i]);
        let h = match mode {
            HueMode::Multiplicative => (h as f64 * factor).rem_euclid(1.0),
            HueMode::Shift => (h as f64 + factor - 1.0).rem_euclid(1.0),
        } as f32;
        let (r, g, b) = hsv_to_rgb(h, s, v);
        data[i] = r.clamp(0.0, 1.0);
        data[n + i] = g.clamp(0.0, 1.0);
        data[2 * n + i] = b.clamp(0.0, 1.0);
    }
}

/// Hue in `[0, 1)`, saturation and value in `[0, 1]`.
pub(crate) fn rgb_to_hsv(r: f32, g: f32, b: f32) -> (f32, f32, f32) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    if delta == 0.0 {
        return (0.0, s, max);
    }
    let h = if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    ((h / 6.0).rem_euclid(1.0), s, max)
}

pub(crate) fn hsv_to_rgb(h: f32, s: f32, v: f32) -> (f32, f32, f32) {
    let h6 = h * 6.0;
    let sector = h6.floor();
    let f = h6 - sector;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match (sector as i32).rem_euclid(6) {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hsv_round_trip() {
        for &(r, g, b) in &[(0.2, 0.4, 0.9), (1.0, 0.0, 0.0), (0.5, 0.5, 0.5), (0.9, 0.8, 0.1), (0.3, 0.0, 0.6)] {
            let (h, s, v) = rgb_to_hsv(r, g, b);
            let (r2, g2, b2) = hsv_to_rgb(h, s, v);
            assert!((r - r2).abs() < 1e-6 && (g - g2).abs() < 1e-6 && (b - b2).abs() < 1e-6);
        }
    }

    #[test]
    fn pure_colors_have_expected_hue() {
        assert_eq!(rgb_to_hsv(1.0, 0.0, 0.0).0, 0.0);
        assert!((rgb_to_hsv(0.0, 1.0, 0.0).0 - 1.0 / 3.0).abs() < 1e-7);
        assert!((rgb_to_hsv(0.0, 0.0, 1.0).0 - 2.0 / 3.0).abs() < 1e-7);
    }

    #[test]
    fn hue_scaling_moves_green_toward_cyan() {
        let mut img = ImageTensor::filled(1, 1, [0.0, 1.0, 0.0]).unwrap();
        adjust_hue(&mut img, 1.03, HueMode::Multiplicative);
        let (h, _, _) = rgb_to_hsv(img.get(0, 0, 0), img.get(1, 0, 0), img.get(2, 0, 0));
        assert!((h - 1.03 / 3.0).abs() < 1e-5, "{h}");
    }

    #[test]
    fn hue_shift_wraps() {
        let mut img = ImageTensor::filled(1, 1, [1.0, 0.0, 0.0]).unwrap();
        adjust_hue(&mut img, 0.97, HueMode::Shift);
        let (h, _, _) = rgb_to_hsv(img.get(0, 0, 0), img.get(1, 0, 0), img.get(2, 0, 0));
        assert!((h - 0.97).abs() < 1e-5, "{h}");
    }

    #[test]
    fn gray_images_ignore_saturation_and_hue() {
        let img = ImageTensor::filled(3, 3, [0.4; 3]).unwrap();
        let mut a = img.clone();
        adjust_saturation(&mut a, 1.06);
        adjust_hue(&mut a, 1.03, HueMode::Multiplicative);
        for (x, y) in a.data().iter().zip(img.data()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn contrast_pulls_toward_mean() {
        let mut img = ImageTensor::new(1, 2, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]).unwrap();
        adjust_contrast(&mut img, 0.5);
        assert!((img.get(0, 0, 0) - 0.25).abs() < 1e-6);
        assert!((img.get(0, 0, 1) - 0.75).abs() < 1e-6);
    }
}
