use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Model-specific input normalization applied after decode/resize/augment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreprocessMode {
    /// Reorder RGB to BGR, then subtract the fixed per-channel means
    /// (103.939, 116.779, 123.68).
    ResnetMeans,
    /// Map [0, 255] to [-1, 1] via `x / 127.5 - 1`.
    ScalePm1,
}

/// Per-channel means subtracted in [`PreprocessMode::ResnetMeans`] (BGR order).
pub const BGR_MEANS: [f32; 3] = [103.939, 116.779, 123.68];

/// Decode a PNG or JPEG to 8-bit RGB (grayscale replicated across channels)
/// at its native size. Output is `(H, W, 3)` with values in [0, 255] as `f32`.
pub fn decode_image(path: &Path) -> Result<Tensor<f32>> {
    let img = image::open(path)
        .map_err(|e| Error::Decode { path: path.to_path_buf(), reason: e.to_string() })?;
    let rgb = img.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut raw = Tensor::<f32>::zeros(&[h, w, 3]);
    for (i, px) in rgb.pixels().enumerate() {
        let base = i * 3;
        raw.data_mut()[base] = px.0[0] as f32;
        raw.data_mut()[base + 1] = px.0[1] as f32;
        raw.data_mut()[base + 2] = px.0[2] as f32;
    }
    Ok(raw)
}

/// [`decode_image`] followed by a bilinear resize to `(height, width)`.
pub fn decode_and_resize(path: &Path, target: (usize, usize)) -> Result<Tensor<f32>> {
    Ok(bilinear_resize(&decode_image(path)?, target))
}

/// Encode an `(H, W, 3)` tensor in [0, 255] as a PNG (values rounded and
/// clamped to 8 bits).
pub fn save_png(image: &Tensor<f32>, path: &Path) -> Result<()> {
    let shape = image.shape();
    let (h, w) = (shape[0], shape[1]);
    let mut rgb = image::RgbImage::new(w as u32, h as u32);
    for (i, px) in rgb.pixels_mut().enumerate() {
        for c in 0..3 {
            px.0[c] = image.data()[i * 3 + c].round().clamp(0.0, 255.0) as u8;
        }
    }
    rgb.save(path).map_err(|e| Error::Decode { path: path.to_path_buf(), reason: e.to_string() })
}

/// Bilinear resample of an `(H, W, C)` image to `(target_h, target_w)`.
///
/// Uses half-pixel centers (`src = (dst + 0.5) * scale - 0.5`, the
/// aligned-corners-false convention), with source coordinates clamped at the
/// edges. Same-size resize reproduces the input bitwise.
pub fn bilinear_resize(image: &Tensor<f32>, target: (usize, usize)) -> Tensor<f32> {
    let shape = image.shape();
    let (h, w, c) = (shape[0], shape[1], shape[2]);
    let (th, tw) = target;
    if (th, tw) == (h, w) {
        return image.clone();
    }
    let sy = h as f64 / th as f64;
    let sx = w as f64 / tw as f64;
    let mut out = Tensor::zeros(&[th, tw, c]);
    let src = image.data();
    let dst = out.data_mut();
    for y in 0..th {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let wy = (fy - y0 as f64) as f32;
        for x in 0..tw {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let wx = (fx - x0 as f64) as f32;
            for ch in 0..c {
                let p00 = src[(y0 * w + x0) * c + ch];
                let p01 = src[(y0 * w + x1) * c + ch];
                let p10 = src[(y1 * w + x0) * c + ch];
                let p11 = src[(y1 * w + x1) * c + ch];
                let top = p00 * (1.0 - wx) + p01 * wx;
                let bottom = p10 * (1.0 - wx) + p11 * wx;
                dst[(y * tw + x) * c + ch] = top * (1.0 - wy) + bottom * wy;
            }
        }
    }
    out
}

/// Apply the model-specific normalization to an `(H, W, 3)` image in
/// [0, 255].
pub fn preprocess(image: &Tensor<f32>, mode: PreprocessMode) -> Tensor<f32> {
    let mut out = image.clone();
    match mode {
        PreprocessMode::ScalePm1 => {
            for v in out.data_mut() {
                *v = *v / 127.5 - 1.0;
            }
        }
        PreprocessMode::ResnetMeans => {
            for px in out.data_mut().chunks_exact_mut(3) {
                let (r, g, b) = (px[0], px[1], px[2]);
                px[0] = b - BGR_MEANS[0];
                px[1] = g - BGR_MEANS[1];
                px[2] = r - BGR_MEANS[2];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_size_resize_is_bitwise_identity() {
        let img = Tensor::from_fn(&[5, 7, 3], |i| (i % 251) as f32);
        let out = bilinear_resize(&img, (5, 7));
        assert_eq!(out.data(), img.data());
    }

    #[test]
    fn constant_image_survives_any_resize() {
        let img = Tensor::filled(&[100, 100, 3], 137.0);
        let out = bilinear_resize(&img, (50, 50));
        assert_eq!(out.shape(), &[50, 50, 3]);
        assert!(out.data().iter().all(|&v| (v - 137.0).abs() < 1e-4));
    }

    #[test]
    fn four_to_two_checkerboard_averages_blocks() {
        // 4x4 checkerboard of 0/255; each 2x2 output pixel lands exactly
        // between its four sources, so it averages them: (0+255+255+0)/4.
        let img = Tensor::from_fn(&[4, 4, 1], |i| {
            let (y, x) = (i / 4, i % 4);
            if (y + x) % 2 == 0 {
                0.0
            } else {
                255.0
            }
        });
        let out = bilinear_resize(&img, (2, 2));
        for &v in out.data() {
            assert!((v - 127.5).abs() < 1e-4, "got {v}");
        }
    }

    #[test]
    fn scale_pm1_maps_endpoints() {
        let img = Tensor::new(vec![1, 1, 3], vec![255.0, 0.0, 127.5]).unwrap();
        let out = preprocess(&img, PreprocessMode::ScalePm1);
        assert_eq!(out.data()[0], 1.0);
        assert_eq!(out.data()[1], -1.0);
        assert_eq!(out.data()[2], 0.0);
    }

    #[test]
    fn resnet_means_zero_at_channel_mean() {
        // pixel whose BGR values equal the means maps to zero everywhere
        let img = Tensor::new(vec![1, 1, 3], vec![BGR_MEANS[2], BGR_MEANS[1], BGR_MEANS[0]]).unwrap();
        let out = preprocess(&img, PreprocessMode::ResnetMeans);
        for &v in out.data() {
            assert!(v.abs() < 1e-5, "got {v}");
        }
    }

    #[test]
    fn scale_pm1_round_trips() {
        // f32 pixels bound the absolute round-trip error at ~1.5e-5 on the
        // [0,255] scale (one ulp of the normalized value times 127.5); on the
        // normalized scale the inverse is good to 1e-6.
        let img = Tensor::from_fn(&[3, 3, 3], |i| (i * 9 % 256) as f32);
        let out = preprocess(&img, PreprocessMode::ScalePm1);
        for (orig, v) in img.data().iter().zip(out.data()) {
            let back = (v + 1.0) * 127.5;
            assert!((back - orig).abs() < 1e-3, "pixel-scale error {}", (back - orig).abs());
            assert!((back / 127.5 - 1.0 - v).abs() < 1e-6, "normalized-scale error");
        }
    }
}
