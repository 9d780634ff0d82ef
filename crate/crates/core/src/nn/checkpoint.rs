//! Parameter checkpoints: a JSON manifest plus a little-endian f32 blob in
//! one file.
//!
//! Layout: 8-byte little-endian manifest length, the manifest JSON, then the
//! raw float data. Offsets in the manifest are byte offsets into the blob.
//! Round-tripping is bit-exact.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::array::Tensor;
use super::params::ParamStore;
use crate::util::atomic_write;
use crate::{Error, Result};

const FORMAT: &str = "mocomplete-ckpt-v1";

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    meta: BTreeMap<String, String>,
    params: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the blob.
    offset: u64,
    trainable: bool,
}

/// One named tensor loaded from or headed into a checkpoint.
pub struct Entry {
    pub name: String,
    pub tensor: Tensor<f32>,
    pub trainable: bool,
}

/// Serialize arbitrary named tensors (parameters, optimizer moments, ...).
pub fn save_entries(
    path: &Path,
    entries: &[(&str, &Tensor<f32>, bool)],
    meta: &BTreeMap<String, String>,
) -> Result<()> {
    let mut manifest = Manifest {
        format: FORMAT.to_string(),
        meta: meta.clone(),
        params: Vec::with_capacity(entries.len()),
    };
    let mut blob: Vec<u8> = Vec::new();
    for (name, tensor, trainable) in entries {
        manifest.params.push(ManifestEntry {
            name: (*name).to_string(),
            shape: tensor.shape().to_vec(),
            offset: blob.len() as u64,
            trainable: *trainable,
        });
        for v in tensor.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest_json = serde_json::to_vec(&manifest)?;
    let mut out = Vec::with_capacity(8 + manifest_json.len() + blob.len());
    out.extend_from_slice(&(manifest_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest_json);
    out.extend_from_slice(&blob);
    atomic_write(path, &out)
}

/// Load every entry of a checkpoint file.
pub fn load_entries(path: &Path) -> Result<(Vec<Entry>, BTreeMap<String, String>)> {
    let bytes = fs::read(path)?;
    if bytes.len() < 8 {
        return Err(Error::Data(format!("checkpoint {}: truncated header", path.display())));
    }
    let mlen = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    if bytes.len() < 8 + mlen {
        return Err(Error::Data(format!("checkpoint {}: truncated manifest", path.display())));
    }
    let manifest: Manifest = serde_json::from_slice(&bytes[8..8 + mlen])?;
    if manifest.format != FORMAT {
        return Err(Error::Data(format!(
            "checkpoint {}: unknown format {:?}",
            path.display(),
            manifest.format
        )));
    }
    let blob = &bytes[8 + mlen..];
    let mut entries = Vec::with_capacity(manifest.params.len());
    for p in &manifest.params {
        let n: usize = p.shape.iter().product();
        let start = p.offset as usize;
        let end = start + 4 * n;
        if end > blob.len() {
            return Err(Error::Data(format!(
                "checkpoint {}: parameter {:?} overruns the blob",
                path.display(),
                p.name
            )));
        }
        let data: Vec<f32> = blob[start..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        entries.push(Entry {
            name: p.name.clone(),
            tensor: Tensor::from_vec(&p.shape, data)?,
            trainable: p.trainable,
        });
    }
    Ok((entries, manifest.meta))
}

/// Save a parameter store with free-form metadata (e.g. a spec hash).
pub fn save_store(path: &Path, store: &ParamStore<f32>, meta: &BTreeMap<String, String>) -> Result<()> {
    let entries: Vec<_> = store.iter().collect();
    save_entries(path, &entries, meta)
}

/// Rebuild a parameter store from a checkpoint, preserving registration order.
pub fn load_store(path: &Path) -> Result<(ParamStore<f32>, BTreeMap<String, String>)> {
    let (entries, meta) = load_entries(path)?;
    let mut store = ParamStore::new();
    for e in entries {
        store.add(e.name, e.tensor, e.trainable)?;
    }
    Ok((store, meta))
}

/// Copy checkpointed values into an existing store with identical layout
/// (names and shapes must match the store's registration order).
pub fn load_into(path: &Path, store: &mut ParamStore<f32>) -> Result<BTreeMap<String, String>> {
    let (loaded, meta) = load_store(path)?;
    if loaded.len() != store.len() {
        return Err(Error::Data(format!(
            "checkpoint {}: {} parameters, model expects {}",
            path.display(),
            loaded.len(),
            store.len()
        )));
    }
    for (id, lid) in store.ids().zip(loaded.ids()).collect::<Vec<_>>() {
        if store.name(id) != loaded.name(lid) || store.value(id).shape() != loaded.value(lid).shape() {
            return Err(Error::Data(format!(
                "checkpoint {}: parameter {:?} {:?} does not match model parameter {:?} {:?}",
                path.display(),
                loaded.name(lid),
                loaded.value(lid).shape(),
                store.name(id),
                store.value(id).shape()
            )));
        }
        *store.value_mut(id) = loaded.value(lid).clone();
    }
    Ok(meta)
}
