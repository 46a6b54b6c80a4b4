//! Full checkpoint round trip: train briefly, save, reload into a fresh
//! graph, and rank class probabilities for one image.
//!
//! Run with: cargo run --example predict_image

use mrinet::arch::ModelKind;
use mrinet::data::{save_png, scan_dataset, CLASS_NAMES};
use mrinet::training::{load_checkpoint, predict, save_checkpoint, train_model, Checkpoint, TrainConfig};
use mrinet::Tensor;

fn main() -> mrinet::Result<()> {
    let dir = tempfile::tempdir().expect("tempdir");
    for (class_id, class) in CLASS_NAMES.iter().enumerate() {
        let d = dir.path().join(class);
        std::fs::create_dir_all(&d).expect("mkdir");
        for i in 0..4 {
            let img = Tensor::from_fn(&[16, 16, 3], |j| {
                ((j * (class_id + 2) + i * 31) % 256) as f32
            });
            save_png(&img, &d.join(format!("s{i}.png")))?;
        }
    }
    let (index, _) = scan_dataset(dir.path())?;

    let mut cfg = TrainConfig::for_model(ModelKind::Tinycnn);
    cfg.epochs = 15;
    cfg.batch_size = 20;
    cfg.learning_rate = 1e-3;
    cfg.input_size = (16, 16);
    let out = train_model(&cfg, &index, &index, None, None)?;

    let ckpt_path = dir.path().join("model.ckpt");
    let echo = serde_json::to_value(cfg.effective()).expect("echo");
    save_checkpoint(&Checkpoint::from_graph(&out.graph, echo, cfg.epochs, Some(&out.optimizer)), &ckpt_path)?;
    println!("checkpoint written: {}", ckpt_path.display());

    // reload into a fresh graph, as the CLI does
    let ckpt = load_checkpoint(&ckpt_path)?;
    let mut fresh = ModelKind::from_id(&ckpt.model_id)?.build((16, 16, 3), 5)?;
    fresh.init_params(0);
    ckpt.install(&mut fresh)?;

    let image = dir.path().join("stroke/s0.png");
    println!("\nranked probabilities for {}:", image.display());
    for (name, prob) in predict(&fresh, &image, &cfg)? {
        println!("  {name:<12} {prob:.6}");
    }
    Ok(())
}
