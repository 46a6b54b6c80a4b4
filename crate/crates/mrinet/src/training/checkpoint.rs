//! Checkpoint serialization.
//!
//! File layout: an 8-byte little-endian length, the manifest as UTF-8 JSON,
//! then one raw little-endian `f32` blob. The manifest's parameter tables are
//! key-sorted and offsets are assigned in that order, so saving, loading, and
//! saving again reproduces the file byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::{AdamOptimizer, AdamSnapshot};
use crate::data::index::atomic_write;
use crate::error::{Error, Result};
use crate::graph::NetworkGraph;
use crate::tensor::Tensor;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BlobEntry {
    shape: Vec<usize>,
    /// Offset into the blob, in f32 elements.
    offset: u64,
    len: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AdamManifest {
    t: u64,
    m: BTreeMap<String, BlobEntry>,
    v: BTreeMap<String, BlobEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    model_id: String,
    /// Completed epochs at save time.
    epoch: usize,
    config: serde_json::Value,
    params: BTreeMap<String, BlobEntry>,
    adam: Option<AdamManifest>,
}

/// In-memory checkpoint: manifest fields plus the decoded tensors
/// (parameters include batch-norm running statistics).
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model_id: String,
    pub epoch: usize,
    pub config: serde_json::Value,
    pub params: BTreeMap<String, Tensor<f32>>,
    pub adam: Option<AdamSnapshot>,
}

impl Checkpoint {
    pub fn from_graph(
        graph: &NetworkGraph,
        config: serde_json::Value,
        epoch: usize,
        optimizer: Option<&AdamOptimizer<f32>>,
    ) -> Self {
        Checkpoint {
            model_id: graph.model_id().to_string(),
            epoch,
            config,
            params: graph.params().clone(),
            adam: optimizer.map(AdamOptimizer::snapshot),
        }
    }

    /// Copy every parameter into `graph`. All slots are validated against the
    /// checkpoint before any write, so a mismatch never leaves the graph
    /// partially mutated. The first offending slot (in declaration order) is
    /// named.
    pub fn install(&self, graph: &mut NetworkGraph) -> Result<()> {
        for slot in graph.slots() {
            match self.params.get(&slot.name) {
                None => {
                    return Err(Error::Checkpoint {
                        what: format!("checkpoint has no entry for slot {}", slot.name),
                    })
                }
                Some(t) if t.shape() != slot.shape => {
                    return Err(Error::Checkpoint {
                        what: format!(
                            "slot {}: checkpoint shape {:?} does not match declared {:?}",
                            slot.name,
                            t.shape(),
                            slot.shape
                        ),
                    })
                }
                Some(_) => {}
            }
        }
        for name in self.params.keys() {
            if graph.slot(name).is_none() {
                return Err(Error::Checkpoint {
                    what: format!("checkpoint entry {name} has no slot in this architecture"),
                });
            }
        }
        for slot in graph.slots().to_vec() {
            graph.set_param(&slot.name, self.params[&slot.name].clone())?;
        }
        Ok(())
    }
}

fn push_table(
    tensors: &BTreeMap<String, Tensor<f32>>,
    blob: &mut Vec<f32>,
) -> BTreeMap<String, BlobEntry> {
    let mut table = BTreeMap::new();
    for (name, tensor) in tensors {
        table.insert(
            name.clone(),
            BlobEntry {
                shape: tensor.shape().to_vec(),
                offset: blob.len() as u64,
                len: tensor.len() as u64,
            },
        );
        blob.extend_from_slice(tensor.data());
    }
    table
}

fn read_table(
    table: &BTreeMap<String, BlobEntry>,
    blob: &[f32],
    path: &Path,
) -> Result<BTreeMap<String, Tensor<f32>>> {
    let mut out = BTreeMap::new();
    for (name, entry) in table {
        let start = entry.offset as usize;
        let end = start + entry.len as usize;
        if end > blob.len() {
            return Err(Error::Checkpoint {
                what: format!("{}: entry {name} overruns the weight blob", path.display()),
            });
        }
        let expected: usize = entry.shape.iter().product();
        if expected != entry.len as usize {
            return Err(Error::Checkpoint {
                what: format!("{}: entry {name} length disagrees with its shape", path.display()),
            });
        }
        out.insert(name.clone(), Tensor::new(entry.shape.clone(), blob[start..end].to_vec())?);
    }
    Ok(out)
}

/// Serialize and write atomically (temp file + rename).
pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let mut blob: Vec<f32> = Vec::new();
    let params = push_table(&ckpt.params, &mut blob);
    let adam = ckpt.adam.as_ref().map(|snap| AdamManifest {
        t: snap.t,
        m: push_table(&snap.m, &mut blob),
        v: push_table(&snap.v, &mut blob),
    });
    let manifest = Manifest {
        format_version: CHECKPOINT_FORMAT_VERSION,
        model_id: ckpt.model_id.clone(),
        epoch: ckpt.epoch,
        config: ckpt.config.clone(),
        params,
        adam,
    };
    let manifest_json = serde_json::to_string(&manifest)
        .map_err(|e| Error::Checkpoint { what: format!("manifest serialization: {e}") })?;

    let mut bytes = Vec::with_capacity(8 + manifest_json.len() + blob.len() * 4);
    bytes.extend_from_slice(&(manifest_json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(manifest_json.as_bytes());
    for v in &blob {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    atomic_write(path, &bytes)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)
        .map_err(|e| Error::io(format!("reading checkpoint {}", path.display()), e))?;
    if bytes.len() < 8 {
        return Err(Error::Checkpoint { what: format!("{}: truncated header", path.display()) });
    }
    let manifest_len = u64::from_le_bytes(bytes[0..8].try_into().unwrap()) as usize;
    if 8 + manifest_len > bytes.len() {
        return Err(Error::Checkpoint {
            what: format!("{}: manifest length overruns the file", path.display()),
        });
    }
    let manifest: Manifest = serde_json::from_slice(&bytes[8..8 + manifest_len])
        .map_err(|e| Error::Checkpoint { what: format!("{}: bad manifest: {e}", path.display()) })?;
    if manifest.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::Checkpoint {
            what: format!(
                "{}: format version {} unsupported (expected {CHECKPOINT_FORMAT_VERSION})",
                path.display(),
                manifest.format_version
            ),
        });
    }
    let payload = &bytes[8 + manifest_len..];
    if payload.len() % 4 != 0 {
        return Err(Error::Checkpoint {
            what: format!("{}: weight blob is not a whole number of f32", path.display()),
        });
    }
    let blob: Vec<f32> =
        payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();

    let params = read_table(&manifest.params, &blob, path)?;
    let adam = match &manifest.adam {
        Some(a) => Some(AdamSnapshot {
            t: a.t,
            m: read_table(&a.m, &blob, path)?,
            v: read_table(&a.v, &blob, path)?,
        }),
        None => None,
    };
    Ok(Checkpoint { model_id: manifest.model_id, epoch: manifest.epoch, config: manifest.config, params, adam })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::build_tiny_cnn;

    fn tiny_graph() -> NetworkGraph {
        let mut g = build_tiny_cnn((8, 8, 3), 5).unwrap();
        g.init_params(7);
        g
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let graph = tiny_graph();
        let ckpt = Checkpoint::from_graph(&graph, serde_json::json!({"seed": 7}), 3, None);
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        save_checkpoint(&ckpt, &p1).unwrap();
        let loaded = load_checkpoint(&p1).unwrap();
        save_checkpoint(&loaded, &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn install_restores_parameters_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let graph = tiny_graph();
        let path = dir.path().join("c.ckpt");
        save_checkpoint(&Checkpoint::from_graph(&graph, serde_json::Value::Null, 0, None), &path)
            .unwrap();
        let mut other = tiny_graph();
        other.init_params(99);
        load_checkpoint(&path).unwrap().install(&mut other).unwrap();
        for (name, t) in graph.params() {
            assert_eq!(t.data(), other.param(name).unwrap().data(), "{name}");
        }
    }

    #[test]
    fn wrong_architecture_names_the_first_offending_slot() {
        let dir = tempfile::tempdir().unwrap();
        let graph = tiny_graph();
        let path = dir.path().join("d.ckpt");
        save_checkpoint(&Checkpoint::from_graph(&graph, serde_json::Value::Null, 0, None), &path)
            .unwrap();
        let mut wrong = crate::arch::build_mobilenet_v2((32, 32, 3), 5).unwrap();
        wrong.init_params(1);
        let before: Vec<u64> = wrong.params().values().map(Tensor::bit_checksum).collect();
        let err = load_checkpoint(&path).unwrap().install(&mut wrong).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("conv1.kernel"), "{msg}");
        // no partial mutation
        let after: Vec<u64> = wrong.params().values().map(Tensor::bit_checksum).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn corrupt_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.ckpt");
        fs::write(&path, b"nonsense").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint { .. })));
        let graph = tiny_graph();
        let good = dir.path().join("f.ckpt");
        save_checkpoint(&Checkpoint::from_graph(&graph, serde_json::Value::Null, 0, None), &good)
            .unwrap();
        let mut bytes = fs::read(&good).unwrap();
        let n = bytes.len();
        bytes.truncate(n - 10);
        fs::write(&good, bytes).unwrap();
        assert!(load_checkpoint(&good).is_err());
    }
}
