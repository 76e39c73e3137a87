use crate::embeddings::ImageTensor;

/// Normalized Gaussian weights over a `size`-tap window centred on zero.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    assert!(size % 2 == 1, "kernel size must be odd");
    let r = (size / 2) as f64;
    let raw: Vec<f64> = (0..size)
        .map(|i| {
            let x = i as f64 - r;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / sum).collect()
}

/// Mirror an out-of-range index back into `0..len` without repeating the edge.
fn reflect(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = i.rem_euclid(period);
    (if m < len as isize { m } else { period - m }) as usize
}

/// Separable Gaussian blur with reflect padding. `sigma <= 0` is a no-op.
pub fn gaussian_blur(img: &ImageTensor, kernel: usize, sigma: f64) -> ImageTensor {
    if sigma <= 0.0 {
        return img.clone();
    }
    let weights = gaussian_kernel(kernel, sigma);
    let r = (kernel / 2) as isize;
    let (h, w) = (img.height(), img.width());
    let mut out = img.clone();
    let mut tmp = vec![0f64; h * w];
    for c in 0..3 {
        let src = img.plane(c);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, wk) in weights.iter().enumerate() {
                    let xx = reflect(x as isize + k as isize - r, w);
                    acc += wk * src[y * w + xx] as f64;
                }
                tmp[y * w + x] = acc;
            }
        }
        let dst = out.plane_mut(c);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, wk) in weights.iter().enumerate() {
                    let yy = reflect(y as isize + k as isize - r, h);
                    acc += wk * tmp[yy * w + x];
                }
                dst[y * w + x] = (acc as f32).clamp(0.0, 1.0);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_sums_to_one() {
        for sigma in [0.3, 0.7, 0.85, 1.0, 3.0] {
            let k = gaussian_kernel(9, sigma);
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!((k[0] - k[8]).abs() < 1e-18);
        }
    }

    #[test]
    fn reflect_indices() {
        let got: Vec<usize> = (-3..8).map(|i| reflect(i, 5)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 4, 3, 2, 1]);
        assert_eq!(reflect(-4, 1), 0);
    }

    #[test]
    fn constant_image_unchanged() {
        let img = ImageTensor::filled(10, 13, [0.25, 0.5, 0.75]).unwrap();
        let out = gaussian_blur(&img, 9, 0.8);
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn impulse_response_is_outer_product() {
        // Hand-computed 9-tap kernel at sigma = 1: exp(-x^2/2) for x = 0..4,
        // normalized by 1 + 2 * (e^-0.5 + e^-2 + e^-4.5 + e^-8).
        let tail = (-0.5f64).exp() + (-2.0f64).exp() + (-4.5f64).exp() + (-8.0f64).exp();
        let center = 1.0 / (1.0 + 2.0 * tail);
        let side = (-0.5f64).exp() / (1.0 + 2.0 * tail);
        let mut img = ImageTensor::filled(33, 33, [0.0; 3]).unwrap();
        let n = 33 * 33;
        for c in 0..3 {
            img.data_mut()[c * n + 16 * 33 + 16] = 1.0;
        }
        let out = gaussian_blur(&img, 9, 1.0);
        assert!((out.get(0, 16, 16) as f64 - center * center).abs() < 1e-7);
        assert!((out.get(1, 16, 17) as f64 - center * side).abs() < 1e-7);
        assert!((out.get(2, 15, 17) as f64 - side * side).abs() < 1e-7);
    }

    #[test]
    fn interior_mass_is_preserved() {
        // Content kept at least a kernel radius from the border.
        let mut img = ImageTensor::filled(40, 40, [0.0; 3]).unwrap();
        let n = 40 * 40;
        for c in 0..3 {
            for y in 10..30 {
                for x in 10..30 {
                    img.data_mut()[c * n + y * 40 + x] = ((x * y + c) % 7) as f32 / 7.0;
                }
            }
        }
        let out = gaussian_blur(&img, 9, 0.9);
        assert!((out.mean() - img.mean()).abs() < 1e-4);
    }
}
