//! Transfer-learning flow: pretrain on one synthetic task, export the
//! checkpoint, import only the backbone into a fresh model, and fine-tune
//! the head with the backbone frozen.
//!
//! Run with: cargo run --example weight_import

use mrinet::arch::{import_weights, ModelKind};
use mrinet::data::{save_png, scan_dataset, CLASS_NAMES};
use mrinet::graph::ParamGroup;
use mrinet::training::{load_checkpoint, train_model, BackboneMode, TrainConfig};
use mrinet::Tensor;

fn write_task(dir: &std::path::Path, flavor: usize) -> mrinet::Result<mrinet::data::DatasetIndex> {
    for (class_id, class) in CLASS_NAMES.iter().enumerate() {
        let d = dir.join(class);
        std::fs::create_dir_all(&d).expect("mkdir");
        for i in 0..4 {
            let img = Tensor::from_fn(&[16, 16, 3], |j| {
                ((j * (class_id + 2 + flavor) + i * 17) % 256) as f32
            });
            save_png(&img, &d.join(format!("s{i}.png")))?;
        }
    }
    Ok(scan_dataset(dir)?.0)
}

fn main() -> mrinet::Result<()> {
    let dir = tempfile::tempdir().expect("tempdir");
    let pretrain_index = write_task(&dir.path().join("pretrain"), 0)?;
    let finetune_index = write_task(&dir.path().join("finetune"), 5)?;

    let mut cfg = TrainConfig::for_model(ModelKind::Tinycnn);
    cfg.epochs = 10;
    cfg.batch_size = 20;
    cfg.learning_rate = 1e-3;
    cfg.input_size = (16, 16);

    println!("pretraining...");
    let run_dir = dir.path().join("pretrain_run");
    let pretrained = train_model(&cfg, &pretrain_index, &pretrain_index, Some(&run_dir), None)?;
    let blob = load_checkpoint(&pretrained.final_checkpoint.expect("final checkpoint"))?;

    // fresh model; bring over backbone slots only, head stays at init
    let mut target = cfg.model.build((16, 16, 3), 5)?;
    target.init_params(99);
    let map: Vec<(String, String)> = target
        .slots()
        .iter()
        .filter(|s| s.group == ParamGroup::Backbone)
        .map(|s| (s.name.clone(), s.name.clone()))
        .collect();
    let report = import_weights(&mut target, &blob.params, &map)?;
    println!(
        "imported {} slots, {} skipped (head), {} source entries unused",
        report.loaded.len(),
        report.skipped.len(),
        report.missing.len()
    );

    println!("fine-tuning the head with the backbone frozen...");
    cfg.backbone_mode = BackboneMode::Frozen;
    cfg.seed = 99;
    let tuned = train_model(&cfg, &finetune_index, &finetune_index, None, None)?;
    let last = tuned.history.rows.last().expect("history");
    println!(
        "fine-tune epoch {}: train_acc {:.3} val_acc {:.3}",
        last.epoch, last.train_acc, last.val_acc
    );
    Ok(())
}
