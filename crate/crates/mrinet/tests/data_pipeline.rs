//! End-to-end data pipeline tests over real directory trees and image files.

use std::fs;
use std::path::Path;

use mrinet::data::{
    batch_iter, class_name, decode_and_resize, decode_image, save_png, scan_dataset,
    stratified_split, AugmentParams, BatchOptions, DatasetIndex, PreprocessMode, CLASS_NAMES,
};
use mrinet::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Lay out a dataset tree; `real_images` writes decodable PNGs, otherwise
/// files are empty placeholders (enough for scan/split tests).
fn make_tree(root: &Path, per_class: &[usize; 5], real_images: bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (class_id, class) in CLASS_NAMES.iter().enumerate() {
        let dir = root.join(class);
        fs::create_dir_all(&dir).unwrap();
        for i in 0..per_class[class_id] {
            let path = dir.join(format!("img_{i:05}.png"));
            if real_images {
                let img = Tensor::from_fn(&[8, 8, 3], |_| rng.gen_range(0.0..256.0f32).floor());
                save_png(&img, &path).unwrap();
            } else {
                fs::write(&path, b"").unwrap();
            }
        }
    }
}

#[test]
fn scan_counts_ten_per_class() {
    let dir = tempfile::tempdir().unwrap();
    make_tree(dir.path(), &[10; 5], false);
    // non-image files are not indexed
    fs::write(dir.path().join("benign/notes.txt"), b"x").unwrap();
    let (index, report) = scan_dataset(dir.path()).unwrap();
    assert_eq!(index.len(), 50);
    assert_eq!(index.per_class_counts(), [10; 5]);
    assert_eq!(report.per_class, [10; 5]);
    assert!(report.skipped.is_empty());
}

#[test]
fn sixth_directory_is_a_taxonomy_error() {
    let dir = tempfile::tempdir().unwrap();
    make_tree(dir.path(), &[1; 5], false);
    fs::create_dir(dir.path().join("premalignant")).unwrap();
    let err = scan_dataset(dir.path()).unwrap_err();
    assert!(err.to_string().contains("premalignant"), "{err}");
}

#[test]
fn missing_class_directory_is_named() {
    let dir = tempfile::tempdir().unwrap();
    make_tree(dir.path(), &[1; 5], false);
    fs::remove_dir_all(dir.path().join("no_tumor")).unwrap();
    let err = scan_dataset(dir.path()).unwrap_err();
    assert!(err.to_string().contains("no_tumor"), "{err}");
}

#[test]
fn manifests_round_trip_and_are_sorted() {
    let dir = tempfile::tempdir().unwrap();
    make_tree(dir.path(), &[3, 1, 2, 1, 1], false);
    let (index, _) = scan_dataset(dir.path()).unwrap();
    let manifest = dir.path().join("all.tsv");
    index.write_manifest(&manifest).unwrap();
    let text = fs::read_to_string(&manifest).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 8);
    let sorted = {
        let mut s = lines.clone();
        s.sort_unstable();
        s
    };
    assert_eq!(lines, sorted, "manifest lines must be sorted");
    assert!(lines.remove(0).starts_with("benign/img_00000.png\t0"));
    let loaded = DatasetIndex::load_manifest(dir.path(), &manifest).unwrap();
    assert_eq!(loaded.records(), index.records());
}

#[test]
fn split_manifests_are_byte_identical_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    make_tree(dir.path(), &[13; 5], false);
    let (index, _) = scan_dataset(dir.path()).unwrap();
    let mut outputs = Vec::new();
    for run in 0..2 {
        let (train, val) = stratified_split(&index, 0.8, 99).unwrap();
        let tp = dir.path().join(format!("train_{run}.tsv"));
        let vp = dir.path().join(format!("val_{run}.tsv"));
        train.write_manifest(&tp).unwrap();
        val.write_manifest(&vp).unwrap();
        outputs.push((fs::read(&tp).unwrap(), fs::read(&vp).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
}

/// Split invariants over many seeds: per-class stratification within one of
/// the exact fraction, disjointness, and union-completeness.
#[test]
fn split_properties_hold_over_a_hundred_seeds() {
    let per_class = [23usize, 57, 11, 40, 9];
    let mut records = Vec::new();
    for (class_id, &n) in per_class.iter().enumerate() {
        for i in 0..n {
            records.push(mrinet::data::DatasetRecord {
                rel_path: format!("{}/s{i:04}.png", class_name(class_id).unwrap()),
                class_id,
            });
        }
    }
    let index = DatasetIndex::from_records("/mem", records).unwrap();
    let total: usize = per_class.iter().sum();
    for seed in 0..100u64 {
        let (train, val) = stratified_split(&index, 0.8, seed).unwrap();
        assert_eq!(train.len() + val.len(), total);
        assert_eq!(train.len(), (0.8 * total as f64).round() as usize);
        let tc = train.per_class_counts();
        for (class_id, &n) in per_class.iter().enumerate() {
            let exact = 0.8 * n as f64;
            assert!(
                (tc[class_id] as f64 - exact).abs() <= 1.0,
                "seed {seed} class {class_id}: {} vs {exact}",
                tc[class_id]
            );
        }
        let mut all: Vec<&str> = train
            .records()
            .iter()
            .chain(val.records())
            .map(|r| r.rel_path.as_str())
            .collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), total, "seed {seed}: overlap or loss between splits");
    }
}

// ---------------------------------------------------------------------------
// decoding
// ---------------------------------------------------------------------------

#[test]
fn exact_size_decode_is_bitwise_stable() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("img.png");
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let img = Tensor::from_fn(&[50, 50, 3], |_| rng.gen_range(0.0..256.0f32).floor());
    save_png(&img, &path).unwrap();
    let native = decode_image(&path).unwrap();
    assert_eq!(native.data(), img.data());
    let resized = decode_and_resize(&path, (50, 50)).unwrap();
    assert_eq!(resized.data(), native.data());
}

#[test]
fn constant_gray_downscales_to_the_same_constant() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gray.png");
    save_png(&Tensor::filled(&[100, 100, 3], 131.0), &path).unwrap();
    let out = decode_and_resize(&path, (50, 50)).unwrap();
    assert_eq!(out.shape(), &[50, 50, 3]);
    assert!(out.data().iter().all(|&v| (v - 131.0).abs() < 1e-4));
}

#[test]
fn grayscale_images_replicate_to_three_channels() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gray8.png");
    let gray = image::GrayImage::from_fn(6, 6, |x, y| image::Luma([(x * 20 + y) as u8]));
    gray.save(&path).unwrap();
    let out = decode_image(&path).unwrap();
    assert_eq!(out.shape(), &[6, 6, 3]);
    for px in out.data().chunks_exact(3) {
        assert_eq!(px[0], px[1]);
        assert_eq!(px[1], px[2]);
    }
}

#[test]
fn undecodable_file_reports_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.png");
    fs::write(&path, b"not a png at all").unwrap();
    let err = decode_and_resize(&path, (8, 8)).unwrap_err();
    assert!(err.to_string().contains("broken.png"), "{err}");
}

// ---------------------------------------------------------------------------
// batch stream over real files
// ---------------------------------------------------------------------------

fn stream_options(epoch: u64, augment: bool) -> BatchOptions {
    BatchOptions {
        batch_size: 4,
        input_size: (8, 8),
        preprocess: PreprocessMode::ScalePm1,
        augment: augment.then(AugmentParams::default),
        shuffle_seed: 5,
        epoch,
    }
}

#[test]
fn one_epoch_covers_every_sample_once() {
    let dir = tempfile::tempdir().unwrap();
    make_tree(dir.path(), &[2; 5], true);
    let (index, _) = scan_dataset(dir.path()).unwrap();
    let stream = batch_iter(&index, &stream_options(0, true)).unwrap();
    assert_eq!(stream.num_batches(), 3); // ceil(10/4)
    let mut label_counts = [0usize; 5];
    let mut total = 0;
    for batch in stream {
        let (images, labels) = batch.unwrap();
        assert_eq!(images.shape()[1..], [8, 8, 3]);
        assert_eq!(images.shape()[0], labels.len());
        for &l in &labels {
            label_counts[l] += 1;
        }
        total += labels.len();
    }
    assert_eq!(total, 10);
    assert_eq!(label_counts, [2; 5]);
}

#[test]
fn same_seed_and_epoch_reproduce_batches_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    make_tree(dir.path(), &[2; 5], true);
    let (index, _) = scan_dataset(dir.path()).unwrap();
    let collect = || -> Vec<Vec<u32>> {
        batch_iter(&index, &stream_options(0, true))
            .unwrap()
            .map(|b| b.unwrap().0.data().iter().map(|v| v.to_bits()).collect())
            .collect()
    };
    assert_eq!(collect(), collect());
    let other_epoch: Vec<Vec<u32>> = batch_iter(&index, &stream_options(1, true))
        .unwrap()
        .map(|b| b.unwrap().0.data().iter().map(|v| v.to_bits()).collect())
        .collect();
    assert_ne!(collect(), other_epoch, "epochs must reshuffle and redraw");
}

/// Augmentation keyed by `(seed, epoch, sample_index)`: a sample's pixels do
/// not depend on which batch it lands in, so loading it alone reproduces its
/// row from the full epoch stream.
#[test]
fn augmentation_is_independent_of_iteration_order() {
    let dir = tempfile::tempdir().unwrap();
    make_tree(dir.path(), &[2; 5], true);
    let (index, _) = scan_dataset(dir.path()).unwrap();
    let opts = stream_options(0, true);
    let stream = batch_iter(&index, &opts).unwrap();
    let full_plan: Vec<usize> = (0..index.len()).collect();
    let (all_images, _) = stream.load(&full_plan).unwrap();
    let plane = 8 * 8 * 3;
    for pos in [0usize, 3, 7, 9] {
        let (single, _) = stream.load(&[pos]).unwrap();
        assert_eq!(
            single.data(),
            &all_images.data()[pos * plane..(pos + 1) * plane],
            "sample {pos} depends on batch context"
        );
    }
}
