//! Checkpoint directories.
//!
//! ```text
//! <dir>/metadata.json    model config, provenance
//! <dir>/index.json       name -> shape, file, byte offset
//! <dir>/params/<name>.bin  little-endian f32, row-major
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use inhaler_core::model::{ModelCheckpoint, ModelParams, Provenance};
use inhaler_core::nn::Mat;
use inhaler_core::ModelConfig;
use serde::{Deserialize, Serialize};

use crate::{read_json, write_json, IoError};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Metadata {
    format_version: u32,
    config: ModelConfig,
    has_head: bool,
    parameter_count: usize,
    provenance: Provenance,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexEntry {
    name: String,
    shape: [usize; 2],
    file: String,
    offset: u64,
}

pub fn save_checkpoint(dir: &Path, ckpt: &ModelCheckpoint) -> Result<(), IoError> {
    let params_dir = dir.join("params");
    std::fs::create_dir_all(&params_dir).map_err(IoError::fs(&params_dir))?;
    let mut index = Vec::new();
    for (name, m) in ckpt.params.tensors() {
        let file = format!("params/{name}.bin");
        let bytes: Vec<u8> = m.data.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
        let path = dir.join(&file);
        std::fs::write(&path, bytes).map_err(IoError::fs(&path))?;
        index.push(IndexEntry { name, shape: [m.rows, m.cols], file, offset: 0 });
    }
    let meta = Metadata {
        format_version: FORMAT_VERSION,
        config: ckpt.config.clone(),
        has_head: ckpt.has_head(),
        parameter_count: ckpt.params.parameter_count(),
        provenance: ckpt.provenance.clone(),
    };
    write_json(&dir.join("metadata.json"), &meta)?;
    write_json(&dir.join("index.json"), &index)
}

pub fn load_checkpoint(dir: &Path) -> Result<ModelCheckpoint, IoError> {
    let bad = |reason: String| IoError::Checkpoint { path: dir.to_path_buf(), reason };
    let meta: Metadata = read_json(&dir.join("metadata.json"))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {}", meta.format_version)));
    }
    meta.config.validate().map_err(|e| bad(e.to_string()))?;
    let index: Vec<IndexEntry> = read_json(&dir.join("index.json"))?;
    let mut tensors = BTreeMap::new();
    for e in index {
        let path = dir.join(&e.file);
        let bytes = std::fs::read(&path).map_err(IoError::fs(&path))?;
        let len = e.shape[0] * e.shape[1];
        let start = e.offset as usize;
        let Some(raw) = bytes.get(start..start + 4 * len) else {
            return Err(bad(format!("{} is shorter than its declared shape", e.file)));
        };
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
        tensors.insert(e.name, Mat::from_vec(e.shape[0], e.shape[1], data));
    }
    let params = ModelParams::from_named(&meta.config, meta.has_head, |name| tensors.remove(name))
        .map_err(|e| bad(e.to_string()))?;
    if let Some(extra) = tensors.keys().next() {
        return Err(bad(format!("unexpected parameter {extra}")));
    }
    Ok(ModelCheckpoint { config: meta.config, params, provenance: meta.provenance })
}
