//! Scan a dataset tree and write stratified train/validation manifests.
//! Builds a small synthetic tree first so the example is self-contained.
//!
//! Run with: cargo run --example dataset_split

use mrinet::data::{scan_dataset, stratified_split, CLASS_NAMES};

fn main() -> mrinet::Result<()> {
    let dir = tempfile::tempdir().expect("tempdir");
    for (class_id, class) in CLASS_NAMES.iter().enumerate() {
        let d = dir.path().join(class);
        std::fs::create_dir_all(&d).expect("mkdir");
        // uneven class sizes to show per-class stratification
        for i in 0..(40 + class_id * 7) {
            std::fs::write(d.join(format!("scan_{i:04}.png")), b"").expect("write");
        }
    }

    let (index, report) = scan_dataset(dir.path())?;
    println!("scanned {} files ({} skipped)", index.len(), report.skipped.len());

    let (train, val) = stratified_split(&index, 0.8, 42)?;
    println!("{:<12} {:>6} {:>6} {:>6}", "class", "total", "train", "val");
    let (tc, vc) = (train.per_class_counts(), val.per_class_counts());
    for (id, name) in CLASS_NAMES.iter().enumerate() {
        println!("{:<12} {:>6} {:>6} {:>6}", name, tc[id] + vc[id], tc[id], vc[id]);
    }
    println!("{:<12} {:>6} {:>6} {:>6}", "total", index.len(), train.len(), val.len());

    let out = dir.path().join("splits");
    std::fs::create_dir_all(&out).expect("mkdir");
    train.write_manifest(&out.join("train.tsv"))?;
    val.write_manifest(&out.join("val.tsv"))?;
    let text = std::fs::read_to_string(out.join("val.tsv")).expect("read");
    println!("\nfirst manifest lines (path<TAB>class_id):");
    for line in text.lines().take(3) {
        println!("  {line}");
    }
    Ok(())
}
