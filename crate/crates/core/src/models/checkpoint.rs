//! Checkpoint container.
//!
//! Layout: the 8-byte magic `EAPCKPT1`, a little-endian u32 header length,
//! a JSON header (format tag, model config, config hash, tensor names and
//! shapes, RNG state), then all tensor values as f64 little-endian in header
//! order. Loading recomputes the config hash and rejects any mismatch.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ModelConfig, ModelError, ModelParams};
use crate::numerics::{RngState, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"EAPCKPT1";
pub const CHECKPOINT_FORMAT: &str = "eapred-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    config: ModelConfig,
    config_hash: String,
    tensors: Vec<TensorEntry>,
    rng: Option<RngState>,
}

/// Parameters plus the random stream position at save time.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub rng: Option<RngState>,
}

/// SHA-256 of the canonical JSON form of a config.
pub fn config_hash(config: &ModelConfig) -> String {
    let json = serde_json::to_vec(config).expect("configs serialize");
    hex::encode(Sha256::digest(json))
}

fn err(path: &Path, message: impl Into<String>) -> ModelError {
    ModelError::Checkpoint {
        path: path.display().to_string(),
        message: message.into(),
    }
}

pub fn write_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>, ModelError> {
    ckpt.params.check_layout()?;
    let header = Header {
        format: CHECKPOINT_FORMAT.into(),
        config: ckpt.params.config.clone(),
        config_hash: config_hash(&ckpt.params.config),
        tensors: ckpt
            .params
            .names
            .iter()
            .zip(&ckpt.params.tensors)
            .map(|(n, t)| TensorEntry {
                name: n.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        rng: ckpt.rng.clone(),
    };
    let json = serde_json::to_vec(&header).expect("headers serialize");
    let mut out = Vec::with_capacity(12 + json.len() + ckpt.params.scalar_count() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for t in &ckpt.params.tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_checkpoint(bytes: &[u8], path: &Path) -> Result<Checkpoint, ModelError> {
    if bytes.len() < 12 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(err(path, "not a checkpoint (bad magic)"));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let hbytes = bytes.get(12..12 + hlen).ok_or_else(|| err(path, "truncated header"))?;
    let header: Header = serde_json::from_slice(hbytes).map_err(|e| err(path, format!("bad header: {e}")))?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(err(path, format!("unsupported format {:?}", header.format)));
    }
    if config_hash(&header.config) != header.config_hash {
        return Err(err(path, "config hash does not match the stored config"));
    }
    let expected = header.config.param_shapes();
    let found: Vec<(String, Vec<usize>)> = header.tensors.iter().map(|t| (t.name.clone(), t.shape.clone())).collect();
    if expected != found {
        return Err(err(path, "tensor layout does not match the config"));
    }
    let data = &bytes[12 + hlen..];
    let total: usize = found.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    if data.len() != total * 8 {
        return Err(err(path, format!("expected {} data bytes, found {}", total * 8, data.len())));
    }
    let mut values = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut tensors = Vec::with_capacity(found.len());
    for (_, shape) in &found {
        let n = shape.iter().product();
        tensors.push(Tensor::new(shape.clone(), values.by_ref().take(n).collect())?);
    }
    let params = ModelParams {
        config: header.config,
        names: found.into_iter().map(|(n, _)| n).collect(),
        tensors,
    };
    if !params.is_finite() {
        return Err(err(path, "non-finite parameter values"));
    }
    Ok(Checkpoint { params, rng: header.rng })
}

pub fn save_params(path: &Path, ckpt: &Checkpoint) -> Result<(), ModelError> {
    let bytes = write_checkpoint(ckpt)?;
    fs::write(path, bytes).map_err(|e| err(path, e.to_string()))
}

pub fn load_params(path: &Path) -> Result<Checkpoint, ModelError> {
    let bytes = fs::read(path).map_err(|e| err(path, e.to_string()))?;
    read_checkpoint(&bytes, path)
}
