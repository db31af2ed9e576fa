//! Model checkpoints: the magic bytes `DFKC`, a little-endian `u32` header
//! length, a JSON header holding the model config and a manifest of
//! `(name, shape, offset)` entries, then every parameter as little-endian `f64`.

use crate::data::{read_f64s, read_header};
use crate::error::{Error, Result};
use crate::model::{ToyTransformer, ToyTransformerConfig};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"DFKC";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the blob, in `f64` elements.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub version: String,
    pub config: ToyTransformerConfig,
    pub manifest: Vec<ManifestEntry>,
    pub total: usize,
}

pub fn to_bytes(model: &ToyTransformer) -> Result<Vec<u8>> {
    let mut manifest = Vec::new();
    let mut offset = 0;
    for (name, t) in model.params() {
        manifest.push(ManifestEntry {
            name,
            shape: t.shape().to_vec(),
            offset,
        });
        offset += t.len();
    }
    let header = CheckpointHeader {
        version: crate::VERSION.to_string(),
        config: model.config().clone(),
        manifest,
        total: offset,
    };
    let h = serde_json::to_vec(&header)?;
    let len = u32::try_from(h.len()).map_err(|_| Error::Format("header too large".into()))?;
    let mut out = Vec::with_capacity(8 + h.len() + 8 * offset);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&h);
    for (_, t) in model.params() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Rebuilds the model from its config and overwrites every parameter with the
/// stored values. The manifest must match the rebuilt parameter list exactly.
pub fn from_bytes(bytes: &[u8]) -> Result<ToyTransformer> {
    let mut r = bytes;
    let header: CheckpointHeader = read_header(&mut r, MAGIC)?;
    let blob = read_f64s(&mut r, header.total)?;
    if !r.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes", r.len())));
    }
    let mut model = ToyTransformer::build(header.config)?;
    let names: Vec<(String, Vec<usize>)> = model
        .params()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect();
    if names.len() != header.manifest.len() {
        return Err(Error::Format(format!(
            "manifest lists {} tensors, model has {}",
            header.manifest.len(),
            names.len()
        )));
    }
    for (((name, shape), entry), slot) in names.iter().zip(&header.manifest).zip(model.params_mut()) {
        if *name != entry.name || *shape != entry.shape {
            return Err(Error::Format(format!(
                "manifest entry `{}` {:?} does not match model tensor `{name}` {shape:?}",
                entry.name, entry.shape
            )));
        }
        let end = entry.offset + slot.len();
        if end > blob.len() {
            return Err(Error::Format(format!("tensor `{name}` runs past the blob")));
        }
        slot.data_mut().copy_from_slice(&blob[entry.offset..end]);
    }
    Ok(model)
}

pub fn save(model: &ToyTransformer, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(model)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ToyTransformer> {
    from_bytes(&std::fs::read(path)?)
}
