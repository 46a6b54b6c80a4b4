//! Build both production models and print their audits: per-layer shapes,
//! parameter counts, convolution-layer counts, and the multiply-add estimate.
//!
//! Run with: cargo run --example inspect_models

use mrinet::arch::{build_mobilenet_v2, build_resnet50, model_summary};

fn main() -> mrinet::Result<()> {
    for graph in [build_resnet50((50, 50, 3), 5)?, build_mobilenet_v2((50, 50, 3), 5)?] {
        let s = model_summary(&graph)?;
        println!("=== {} ===", s.model_id);
        for row in s.rows.iter().filter(|r| r.params > 0 || r.name == "gap") {
            println!("  {:<24} {:<28} {:?}", row.name, row.kind, row.output_shape);
        }
        println!("  stages: {}", s.stage_names.join(", "));
        println!("  conv kernels: {} ({} on the main path)", s.conv_layers, s.main_path_conv_layers);
        println!("  blocks: {}", s.bottleneck_blocks);
        println!("  feature width: {}", s.feature_width);
        println!(
            "  parameters: {} total / {} trainable / {} backbone / {} head",
            s.parameter_count, s.trainable_parameter_count, s.backbone_parameter_count, s.head_parameter_count
        );
        println!("  multiply-adds per image: {}", s.multiply_adds);
        for note in &s.notes {
            println!("  note: {note}");
        }
        println!();
    }
    Ok(())
}
