//! Named weight containers and the single-file checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes   "FCNSEGCK"
//! version      u32       1
//! header_len   u64       byte length of the JSON header
//! header       JSON      {"metadata": {...}, "tensors": {key: {"shape": [n,c,h,w], "offset": o, "len": l}}}
//! payload      f64 LE    tensor values; `offset` is in bytes from the start of the payload
//! ```
//!
//! Keys are written in sorted order and payloads are packed in key order, so equal
//! checkpoints serialize to identical bytes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ModelSpec, SegModel};
use crate::error::{Error, Result};
use crate::tensor::Shape;

const MAGIC: &[u8; 8] = b"FCNSEGCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelSpec,
    /// Which training stage produced the weights, e.g. "tier1-classification".
    pub tier: String,
    #[serde(default)]
    pub epochs_trained: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub shape: Shape,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub tensors: BTreeMap<String, NamedTensor>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    shape: [usize; 4],
    offset: u64,
    len: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    metadata: CheckpointMeta,
    tensors: BTreeMap<String, Entry>,
}

impl Checkpoint {
    pub fn from_model(model: &SegModel, tier: impl Into<String>) -> Self {
        let tensors = model
            .graph
            .params()
            .into_iter()
            .map(|(name, shape, data)| {
                (
                    name,
                    NamedTensor {
                        shape,
                        data: data.to_vec(),
                    },
                )
            })
            .collect();
        Checkpoint {
            meta: CheckpointMeta {
                model: model.spec,
                tier: tier.into(),
                epochs_trained: 0,
            },
            tensors,
        }
    }

    /// A checkpoint with metadata only.
    pub fn empty(meta: CheckpointMeta) -> Self {
        Checkpoint {
            meta,
            tensors: BTreeMap::new(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0u64;
        let mut entries = BTreeMap::new();
        for (k, t) in &self.tensors {
            if t.data.len() != t.shape.numel() {
                return Err(Error::Checkpoint(format!(
                    "tensor {k} has {} values for shape {}",
                    t.data.len(),
                    t.shape
                )));
            }
            let len = t.data.len() as u64;
            entries.insert(
                k.clone(),
                Entry {
                    shape: t.shape.0,
                    offset,
                    len,
                },
            );
            offset += len * 8;
        }
        let header = serde_json::to_vec(&Header {
            metadata: self.meta.clone(),
            tensors: entries,
        })?;
        let mut out = Vec::with_capacity(20 + header.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for t in self.tensors.values() {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let payload_start = 20usize
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&bytes[20..payload_start])?;
        let payload = &bytes[payload_start..];
        let mut tensors = BTreeMap::new();
        for (k, e) in header.tensors {
            let shape = Shape(e.shape);
            if shape.numel() as u64 != e.len {
                return Err(Error::Checkpoint(format!(
                    "tensor {k}: length {} does not match shape {shape}",
                    e.len
                )));
            }
            let start = e.offset as usize;
            let end = start + e.len as usize * 8;
            if end > payload.len() {
                return Err(Error::Checkpoint(format!("tensor {k} extends past end of file")));
            }
            let data = payload[start..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.insert(k, NamedTensor { shape, data });
        }
        Ok(Checkpoint {
            meta: header.metadata,
            tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoadMode {
    Strict,
    Compatible,
}

/// Outcome of [`load_pretrained`].
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LoadReport {
    /// Model parameters overwritten from the checkpoint.
    pub copied: Vec<String>,
    /// Keys present in both but with different shapes; the model keeps its own initialization.
    pub reinitialized: Vec<String>,
    /// Model parameters absent from the checkpoint.
    pub missing: Vec<String>,
    /// Checkpoint keys with no matching model parameter.
    pub unused: Vec<String>,
}

impl LoadReport {
    /// Keys that were not transferred for any reason.
    pub fn skipped(&self) -> Vec<&str> {
        self.reinitialized
            .iter()
            .chain(&self.missing)
            .chain(&self.unused)
            .map(String::as_str)
            .collect()
    }
}

/// Copies checkpoint weights into `model`.
///
/// Strict mode requires the key sets and shapes to match exactly and leaves the model
/// untouched on failure.
pub fn load_pretrained(model: &mut SegModel, ckpt: &Checkpoint, mode: LoadMode) -> Result<LoadReport> {
    let mut report = LoadReport::default();
    let shapes: BTreeMap<String, Shape> = model
        .graph
        .params()
        .into_iter()
        .map(|(n, s, _)| (n, s))
        .collect();
    for (name, shape) in &shapes {
        match ckpt.tensors.get(name) {
            Some(t) if t.shape == *shape => report.copied.push(name.clone()),
            Some(_) => report.reinitialized.push(name.clone()),
            None => report.missing.push(name.clone()),
        }
    }
    report.unused = ckpt
        .tensors
        .keys()
        .filter(|k| !shapes.contains_key(*k))
        .cloned()
        .collect();

    if mode == LoadMode::Strict && !report.skipped().is_empty() {
        let mut offending: Vec<String> = report
            .reinitialized
            .iter()
            .map(|k| format!("{k} (shape)"))
            .collect();
        offending.extend(report.missing.iter().map(|k| format!("{k} (missing)")));
        offending.extend(report.unused.iter().map(|k| format!("{k} (unexpected)")));
        return Err(Error::Checkpoint(format!(
            "strict load mismatch: {}",
            offending.join(", ")
        )));
    }

    for p in model.params_mut() {
        if let Some(t) = ckpt.tensors.get(&p.name) {
            if t.data.len() == p.data.len() && shapes.get(&p.name) == Some(&t.shape) {
                p.data.copy_from_slice(&t.data);
            }
        }
    }
    Ok(report)
}
