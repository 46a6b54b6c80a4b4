use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use super::{CLASS_NAMES, NUM_CLASSES};
use crate::error::{Error, Result};

/// One dataset entry: path relative to the dataset root plus its class id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetRecord {
    pub rel_path: String,
    pub class_id: usize,
}

/// Manifest of (image path, class label) records under a dataset root.
/// Records are kept sorted by relative path, which makes every derived
/// artifact (manifests, epoch plans, augmentation keys) deterministic.
#[derive(Debug, Clone)]
pub struct DatasetIndex {
    root: PathBuf,
    records: Vec<DatasetRecord>,
    /// Classes this index claims to cover. A declared class with zero records
    /// is a split error; scanning declares all five.
    declared: BTreeSet<usize>,
}

/// Side information from a directory scan.
#[derive(Debug, Clone, Default)]
pub struct ScanReport {
    pub per_class: [usize; NUM_CLASSES],
    /// Directory entries that could not be read, with the error text.
    pub skipped: Vec<String>,
}

impl DatasetIndex {
    pub fn from_records(root: impl Into<PathBuf>, mut records: Vec<DatasetRecord>) -> Result<Self> {
        for r in &records {
            if r.class_id >= NUM_CLASSES {
                return Err(Error::Taxonomy {
                    what: format!("record {} has class id {} outside 0..{NUM_CLASSES}", r.rel_path, r.class_id),
                });
            }
        }
        records.sort_by(|a, b| a.rel_path.cmp(&b.rel_path));
        for pair in records.windows(2) {
            if pair[0].rel_path == pair[1].rel_path {
                return Err(Error::Taxonomy {
                    what: format!("duplicate path {}", pair[0].rel_path),
                });
            }
        }
        let declared = records.iter().map(|r| r.class_id).collect();
        Ok(DatasetIndex { root: root.into(), records, declared })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn records(&self) -> &[DatasetRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn declared_classes(&self) -> &BTreeSet<usize> {
        &self.declared
    }

    pub(crate) fn declare_all_classes(&mut self) {
        self.declared = (0..NUM_CLASSES).collect();
    }

    pub fn per_class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0usize; NUM_CLASSES];
        for r in &self.records {
            counts[r.class_id] += 1;
        }
        counts
    }

    /// Absolute path of a record.
    pub fn abs_path(&self, record: &DatasetRecord) -> PathBuf {
        self.root.join(&record.rel_path)
    }

    /// Write the manifest: one `relative/path<TAB>class_id` line per record,
    /// sorted by path.
    pub fn write_manifest(&self, path: &Path) -> Result<()> {
        let mut body = String::new();
        for r in &self.records {
            body.push_str(&r.rel_path);
            body.push('\t');
            body.push_str(&r.class_id.to_string());
            body.push('\n');
        }
        atomic_write(path, body.as_bytes())
    }

    /// Read a manifest written by [`DatasetIndex::write_manifest`].
    pub fn load_manifest(root: impl Into<PathBuf>, path: &Path) -> Result<Self> {
        let file = fs::File::open(path)
            .map_err(|e| Error::io(format!("opening manifest {}", path.display()), e))?;
        let mut records = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(format!("reading manifest {}", path.display()), e))?;
            if line.is_empty() {
                continue;
            }
            let (rel, id) = line.split_once('\t').ok_or_else(|| Error::Taxonomy {
                what: format!("manifest {} line {}: missing tab separator", path.display(), lineno + 1),
            })?;
            let class_id: usize = id.parse().map_err(|_| Error::Taxonomy {
                what: format!("manifest {} line {}: bad class id {id}", path.display(), lineno + 1),
            })?;
            records.push(DatasetRecord { rel_path: rel.to_string(), class_id });
        }
        DatasetIndex::from_records(root, records)
    }
}

/// Write a file atomically: temp file in the same directory, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into())
    ));
    {
        let mut f = fs::File::create(&tmp)
            .map_err(|e| Error::io(format!("creating {}", tmp.display()), e))?;
        f.write_all(bytes).map_err(|e| Error::io(format!("writing {}", tmp.display()), e))?;
        f.sync_all().ok();
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(format!("renaming into {}", path.display()), e))
}

fn is_image_file(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
        Some("png" | "jpg" | "jpeg")
    )
}

/// Scan a dataset root laid out as `<root>/{benign,malignant,no_stroke,no_tumor,stroke}/*`.
///
/// Every class directory must exist and no other directory may be present
/// (this catches taxonomy drift early). Unreadable entries are skipped and
/// reported. Record order is lexicographic by relative path.
pub fn scan_dataset(root: &Path) -> Result<(DatasetIndex, ScanReport)> {
    let mut report = ScanReport::default();
    let entries = fs::read_dir(root)
        .map_err(|e| Error::io(format!("reading dataset root {}", root.display()), e))?;
    let mut dirs = BTreeSet::new();
    for entry in entries {
        let entry = match entry {
            Ok(e) => e,
            Err(e) => {
                report.skipped.push(format!("{}: {e}", root.display()));
                continue;
            }
        };
        let path = entry.path();
        if path.is_dir() {
            dirs.insert(
                path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            );
        }
    }
    for class in CLASS_NAMES {
        if !dirs.contains(class) {
            return Err(Error::Taxonomy {
                what: format!("missing class directory {class} under {}", root.display()),
            });
        }
    }
    for dir in &dirs {
        if !CLASS_NAMES.contains(&dir.as_str()) {
            return Err(Error::Taxonomy {
                what: format!("unexpected directory {dir} under {} (fixed five-class layout)", root.display()),
            });
        }
    }

    let mut records = Vec::new();
    for (class_id, class) in CLASS_NAMES.iter().enumerate() {
        let dir = root.join(class);
        let entries = fs::read_dir(&dir)
            .map_err(|e| Error::io(format!("reading class directory {}", dir.display()), e))?;
        for entry in entries {
            let entry = match entry {
                Ok(e) => e,
                Err(e) => {
                    report.skipped.push(format!("{}: {e}", dir.display()));
                    continue;
                }
            };
            let path = entry.path();
            if path.is_file() && is_image_file(&path) {
                report.per_class[class_id] += 1;
                records.push(DatasetRecord {
                    rel_path: format!("{class}/{}", entry.file_name().to_string_lossy()),
                    class_id,
                });
            }
        }
    }
    let mut index = DatasetIndex::from_records(root, records)?;
    index.declare_all_classes();
    Ok((index, report))
}
