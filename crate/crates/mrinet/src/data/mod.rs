//! Dataset ingestion, stratified splitting, image decoding, augmentation,
//! preprocessing, and batch generation.

pub mod augment;
pub mod batch;
pub mod imaging;
pub mod index;
pub mod split;

pub use augment::{augment_sample, AugmentDraw, AugmentParams};
pub use batch::{batch_iter, epoch_plan, BatchOptions, BatchStream};
pub use imaging::{decode_and_resize, decode_image, preprocess, save_png, PreprocessMode};
pub use index::{scan_dataset, DatasetIndex, DatasetRecord, ScanReport};
pub use split::stratified_split;

/// Fixed five-class taxonomy. Ids are assigned by ascending name order.
pub const CLASS_NAMES: [&str; 5] = ["benign", "malignant", "no_stroke", "no_tumor", "stroke"];

pub const NUM_CLASSES: usize = CLASS_NAMES.len();

/// Name for a class id, if valid.
pub fn class_name(id: usize) -> Option<&'static str> {
    CLASS_NAMES.get(id).copied()
}

/// Id for a class name, if part of the taxonomy.
pub fn class_id(name: &str) -> Option<usize> {
    CLASS_NAMES.iter().position(|&c| c == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_follow_ascending_name_order() {
        let mut sorted = CLASS_NAMES;
        sorted.sort_unstable();
        assert_eq!(sorted, CLASS_NAMES);
        assert_eq!(class_id("benign"), Some(0));
        assert_eq!(class_id("stroke"), Some(4));
        assert_eq!(class_name(3), Some("no_tumor"));
        assert_eq!(class_id("glioma"), None);
    }
}
