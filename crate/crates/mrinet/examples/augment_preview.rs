//! Apply the training augmentation (flip, rotation, zoom, shift) to a test
//! pattern and write the results as PNGs together with the exact draws.
//!
//! Run with: cargo run --example augment_preview

use mrinet::data::{augment_sample, save_png, AugmentParams};
use mrinet::Tensor;

fn main() -> mrinet::Result<()> {
    // asymmetric pattern: bright disc off-center on a dark grid
    let size = 64usize;
    let image = Tensor::from_fn(&[size, size, 3], |i| {
        let p = i / 3;
        let (y, x) = (p / size, p % size);
        let dy = y as f32 - 20.0;
        let dx = x as f32 - 40.0;
        if (dy * dy + dx * dx).sqrt() < 10.0 {
            230.0
        } else if y % 8 == 0 || x % 8 == 0 {
            90.0
        } else {
            25.0
        }
    });

    let out = std::path::PathBuf::from("target/augment_preview");
    std::fs::create_dir_all(&out).expect("mkdir");
    save_png(&image, &out.join("original.png"))?;

    let params = AugmentParams::default();
    for sample in 0..8u64 {
        let draw = params.draw(AugmentParams::stream_seed(7, 0, sample));
        let augmented = augment_sample(&image, &draw);
        let path = out.join(format!("aug_{sample}.png"));
        save_png(&augmented, &path)?;
        println!(
            "{}: flip={} angle={:+.2}deg zoom={:.3} shift=({:+.3}, {:+.3})",
            path.display(),
            draw.flip,
            draw.angle_deg,
            draw.zoom,
            draw.shift_x_frac,
            draw.shift_y_frac
        );
    }
    println!("previews written to {}", out.display());
    Ok(())
}
