//! Train the reduced-depth model until it memorizes a small synthetic
//! five-class dataset, then evaluate and print the confusion matrix. This is
//! the desk-scale sanity check for the whole training stack.
//!
//! Run with: cargo run --example train_overfit

use mrinet::arch::ModelKind;
use mrinet::data::{save_png, scan_dataset, AugmentParams, CLASS_NAMES};
use mrinet::training::{evaluate, train_model, TrainConfig};
use mrinet::Tensor;

fn pattern(class_id: usize, sample: usize, size: usize) -> Tensor<f32> {
    Tensor::from_fn(&[size, size, 3], |i| {
        let p = i / 3;
        let (y, x) = (p / size, p % size);
        let v = match class_id {
            0 => if (y / (3 + sample % 3)) % 2 == 0 { 220.0 } else { 40.0 },
            1 => if (x / (3 + sample % 3)) % 2 == 0 { 220.0 } else { 40.0 },
            2 => {
                let cell = 2 + sample % 3;
                if ((x / cell) + (y / cell)) % 2 == 0 { 200.0 } else { 60.0 }
            }
            3 => {
                let c = size as f32 / 2.0;
                let r = ((y as f32 - c).powi(2) + (x as f32 - c).powi(2)).sqrt();
                if r < size as f32 / 4.0 + sample as f32 { 230.0 } else { 30.0 }
            }
            _ => ((x + y + sample * 5) % size) as f32 / size as f32 * 255.0,
        };
        if i % 3 == class_id % 3 { v } else { v * 0.6 }
    })
}

fn main() -> mrinet::Result<()> {
    let dir = tempfile::tempdir().expect("tempdir");
    for (class_id, class) in CLASS_NAMES.iter().enumerate() {
        let d = dir.path().join(class);
        std::fs::create_dir_all(&d).expect("mkdir");
        for i in 0..8 {
            save_png(&pattern(class_id, i, 32), &d.join(format!("p{i:03}.png")))?;
        }
    }
    let (index, _) = scan_dataset(dir.path())?;

    let mut cfg = TrainConfig::for_model(ModelKind::Tinycnn);
    cfg.epochs = 40;
    cfg.batch_size = 40;
    cfg.learning_rate = 1e-3;
    cfg.seed = 6;
    cfg.input_size = (32, 32);
    cfg.augment = AugmentParams {
        rotation_max_deg: 0.0,
        shift_max_frac: 0.0,
        zoom_max_frac: 0.0,
        hflip_prob: 0.0,
    };

    println!("training {} on {} images...", cfg.model.id(), index.len());
    let out = train_model(&cfg, &index, &index, None, None)?;
    for row in out.history.rows.iter().step_by(5) {
        println!(
            "epoch {:>3}: train_loss {:.4} train_acc {:.3}",
            row.epoch, row.train_loss, row.train_acc
        );
    }

    let eval = evaluate(&out.graph, &index, &cfg)?;
    println!("\nfinal accuracy {:.3}, loss {:.4}", eval.accuracy, eval.loss);
    println!("confusion matrix (rows = true class):");
    for (i, row) in eval.confusion.iter().enumerate() {
        println!("  {:<12} {:?}", CLASS_NAMES[i], row);
    }
    Ok(())
}
