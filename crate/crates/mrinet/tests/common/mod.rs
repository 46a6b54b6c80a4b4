//! Shared fixtures: deterministic synthetic image datasets laid out in the
//! fixed five-class directory structure.

#![allow(dead_code)]

pub mod oracles;

use std::path::Path;

use mrinet::data::{save_png, scan_dataset, DatasetIndex, CLASS_NAMES};
use mrinet::Tensor;

/// A class-distinctive pattern: stripes, checkers, discs, and gradients with
/// per-sample variation. Values are valid 8-bit pixels.
pub fn pattern_image(class_id: usize, sample: usize, size: usize) -> Tensor<f32> {
    Tensor::from_fn(&[size, size, 3], |i| {
        let c = i % 3;
        let p = i / 3;
        let (y, x) = (p / size, p % size);
        let v = match class_id {
            0 => {
                let period = 3 + sample % 3;
                if (y / period) % 2 == 0 {
                    220.0
                } else {
                    40.0
                }
            }
            1 => {
                let period = 3 + sample % 3;
                if (x / period) % 2 == 0 {
                    220.0
                } else {
                    40.0
                }
            }
            2 => {
                let cell = 2 + sample % 3;
                if ((x / cell) + (y / cell)) % 2 == 0 {
                    200.0
                } else {
                    60.0
                }
            }
            3 => {
                let cy = size as f32 / 2.0;
                let cx = size as f32 / 2.0;
                let r = ((y as f32 - cy).powi(2) + (x as f32 - cx).powi(2)).sqrt();
                let radius = size as f32 / 4.0 + sample as f32;
                if r < radius {
                    230.0
                } else {
                    30.0
                }
            }
            _ => ((x + y + sample * 5) % size) as f32 / size as f32 * 255.0,
        };
        // light per-class channel tint keeps classes linearly separable
        if c == class_id % 3 {
            v
        } else {
            v * 0.6
        }
    })
}

/// Write `per_class` pattern images per class under `root` and scan them.
pub fn write_pattern_dataset(root: &Path, per_class: usize, size: usize) -> DatasetIndex {
    for (class_id, class) in CLASS_NAMES.iter().enumerate() {
        let dir = root.join(class);
        std::fs::create_dir_all(&dir).unwrap();
        for i in 0..per_class {
            save_png(&pattern_image(class_id, i, size), &dir.join(format!("p{i:03}.png"))).unwrap();
        }
    }
    scan_dataset(root).unwrap().0
}
