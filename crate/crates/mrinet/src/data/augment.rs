//! Training-time augmentation: horizontal flip, rotation, zoom, and shift,
//! applied in that fixed order as one composed affine warp.
//!
//! Out-of-bounds samples read the nearest edge pixel. The draw for a sample
//! is keyed by `(seed, epoch, sample_index)`, so results do not depend on
//! iteration order or worker parallelism.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::mix_seeds;
use crate::tensor::Tensor;

/// Augmentation magnitudes. All default values are mild and configurable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    /// Rotation drawn uniformly from `[-rotation_max_deg, +rotation_max_deg]`.
    pub rotation_max_deg: f64,
    /// Shift drawn uniformly from `+-shift_max_frac` of each dimension.
    pub shift_max_frac: f64,
    /// Zoom factor drawn uniformly from `1 +- zoom_max_frac`.
    pub zoom_max_frac: f64,
    pub hflip_prob: f64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams {
            rotation_max_deg: 15.0,
            shift_max_frac: 0.10,
            zoom_max_frac: 0.10,
            hflip_prob: 0.5,
        }
    }
}

impl AugmentParams {
    pub fn validate(&self) -> Result<()> {
        if self.rotation_max_deg < 0.0
            || self.shift_max_frac < 0.0
            || self.zoom_max_frac < 0.0
            || !(0.0..=1.0).contains(&self.hflip_prob)
        {
            return Err(Error::Config {
                what: "augmentation magnitudes must be non-negative (flip probability in [0,1])".into(),
            });
        }
        if self.shift_max_frac >= 1.0 || self.zoom_max_frac >= 1.0 {
            return Err(Error::Config {
                what: "shift and zoom fractions must be below 1".into(),
            });
        }
        Ok(())
    }

    /// Consume the per-sample stream in a fixed order: flip, angle, zoom,
    /// shift x, shift y.
    pub fn draw(&self, stream_seed: u64) -> AugmentDraw {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed);
        let flip = rng.gen::<f64>() < self.hflip_prob;
        let angle_deg = if self.rotation_max_deg > 0.0 {
            rng.gen_range(-self.rotation_max_deg..=self.rotation_max_deg)
        } else {
            0.0
        };
        let zoom = if self.zoom_max_frac > 0.0 {
            rng.gen_range(1.0 - self.zoom_max_frac..=1.0 + self.zoom_max_frac)
        } else {
            1.0
        };
        let (shift_x_frac, shift_y_frac) = if self.shift_max_frac > 0.0 {
            (
                rng.gen_range(-self.shift_max_frac..=self.shift_max_frac),
                rng.gen_range(-self.shift_max_frac..=self.shift_max_frac),
            )
        } else {
            (0.0, 0.0)
        };
        AugmentDraw { flip, angle_deg, zoom, shift_x_frac, shift_y_frac }
    }

    /// Stream seed for `(seed, epoch, sample_index)`.
    pub fn stream_seed(seed: u64, epoch: u64, sample_index: u64) -> u64 {
        mix_seeds(&[seed, epoch, sample_index, 0xA06])
    }
}

/// The exact parameters applied to one sample; persisted by the preview
/// command log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentDraw {
    pub flip: bool,
    pub angle_deg: f64,
    pub zoom: f64,
    pub shift_x_frac: f64,
    pub shift_y_frac: f64,
}

impl AugmentDraw {
    pub fn identity() -> Self {
        AugmentDraw { flip: false, angle_deg: 0.0, zoom: 1.0, shift_x_frac: 0.0, shift_y_frac: 0.0 }
    }

    pub fn is_identity(&self) -> bool {
        !self.flip
            && self.angle_deg == 0.0
            && self.zoom == 1.0
            && self.shift_x_frac == 0.0
            && self.shift_y_frac == 0.0
    }
}

/// Apply a draw to an `(H, W, C)` image. The shape never changes; the
/// identity draw returns the input bitwise.
pub fn warp_image(image: &Tensor<f32>, draw: &AugmentDraw) -> Tensor<f32> {
    if draw.is_identity() {
        return image.clone();
    }
    let shape = image.shape();
    let (h, w, c) = (shape[0], shape[1], shape[2]);
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let theta = draw.angle_deg.to_radians();
    let (sin, cos) = theta.sin_cos();
    let dx = draw.shift_x_frac * w as f64;
    let dy = draw.shift_y_frac * h as f64;

    let mut out = Tensor::zeros(shape);
    let src = image.data();
    let dst = out.data_mut();
    for y in 0..h {
        for x in 0..w {
            // invert the pipeline: shift, then zoom, then rotation, then flip
            let mut fx = x as f64 - dx - cx;
            let mut fy = y as f64 - dy - cy;
            fx /= draw.zoom;
            fy /= draw.zoom;
            let (rx, ry) = (cos * fx + sin * fy, -sin * fx + cos * fy);
            let mut sx = rx + cx;
            let sy = ry + cy;
            if draw.flip {
                sx = (w as f64 - 1.0) - sx;
            }
            // nearest-edge fill
            let sx = sx.clamp(0.0, (w - 1) as f64);
            let sy = sy.clamp(0.0, (h - 1) as f64);
            let x0 = sx.floor() as usize;
            let y0 = sy.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let y1 = (y0 + 1).min(h - 1);
            let wx = (sx - x0 as f64) as f32;
            let wy = (sy - y0 as f64) as f32;
            for ch in 0..c {
                let p00 = src[(y0 * w + x0) * c + ch];
                let p01 = src[(y0 * w + x1) * c + ch];
                let p10 = src[(y1 * w + x0) * c + ch];
                let p11 = src[(y1 * w + x1) * c + ch];
                let top = p00 * (1.0 - wx) + p01 * wx;
                let bottom = p10 * (1.0 - wx) + p11 * wx;
                dst[(y * w + x) * c + ch] = top * (1.0 - wy) + bottom * wy;
            }
        }
    }
    out
}
