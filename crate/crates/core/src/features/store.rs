//! Binary window store.
//!
//! Layout: the 8-byte magic `EAPWIN01`, a little-endian u32 header length,
//! a JSON [`WindowStoreHeader`], then every window matrix as row-major f64
//! little-endian values, in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::transform::{ImputeStats, ScalerState};
use super::{FeatureError, FeatureMask, FeatureWindow, Sample};
use crate::labeling::LabeledEvent;
use crate::numerics::Tensor;

pub const WINDOW_STORE_MAGIC: &[u8; 8] = b"EAPWIN01";
pub const WINDOW_STORE_FORMAT: &str = "eapred-windows/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowStoreHeader {
    pub format: String,
    pub split: String,
    pub mask: FeatureMask,
    pub window_len: usize,
    /// Column names; their count is the feature dimension `d`.
    pub feature_names: Vec<String>,
    pub tau: f64,
    pub impute: ImputeStats,
    pub scaler: ScalerState,
    pub labels: Vec<LabeledEvent>,
}

fn store_err(path: &Path, message: impl Into<String>) -> FeatureError {
    FeatureError::Store {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Writes `samples` under `mask`; full-width windows are narrowed as needed.
#[allow(clippy::too_many_arguments)]
pub fn write_windows(
    path: &Path,
    split: &str,
    samples: &[Sample],
    mask: FeatureMask,
    window_len: usize,
    tau: f64,
    impute: &ImputeStats,
    scaler: &ScalerState,
) -> Result<(), FeatureError> {
    let mut matrices = Vec::with_capacity(samples.len());
    for s in samples {
        let w = s.window.masked(mask)?;
        if w.matrix.shape() != [window_len, mask.dim()] {
            return Err(store_err(path, format!("window shape {:?} does not match [{window_len}, {}]", w.matrix.shape(), mask.dim())));
        }
        matrices.push(w.matrix);
    }
    let header = WindowStoreHeader {
        format: WINDOW_STORE_FORMAT.to_string(),
        split: split.to_string(),
        mask,
        window_len,
        feature_names: mask.names().iter().map(|s| s.to_string()).collect(),
        tau,
        impute: impute.clone(),
        scaler: scaler.clone(),
        labels: samples.iter().map(|s| s.label.clone()).collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| store_err(path, e.to_string()))?;
    let mut bytes = Vec::with_capacity(12 + json.len() + samples.len() * window_len * mask.dim() * 8);
    bytes.extend_from_slice(WINDOW_STORE_MAGIC);
    bytes.extend_from_slice(&(json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&json);
    for m in &matrices {
        for v in m.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| store_err(path, e.to_string()))
}

pub fn read_windows(path: &Path) -> Result<(WindowStoreHeader, Vec<Sample>), FeatureError> {
    let bytes = fs::read(path).map_err(|e| store_err(path, e.to_string()))?;
    if bytes.len() < 12 || &bytes[..8] != WINDOW_STORE_MAGIC {
        return Err(store_err(path, "not a window store"));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = bytes.get(12..12 + hlen).ok_or_else(|| store_err(path, "truncated header"))?;
    let header: WindowStoreHeader = serde_json::from_slice(body).map_err(|e| store_err(path, e.to_string()))?;
    if header.format != WINDOW_STORE_FORMAT {
        return Err(store_err(path, format!("unsupported format {}", header.format)));
    }
    if header.feature_names != header.mask.names() {
        return Err(store_err(path, "feature layout differs from this build"));
    }
    let dim = header.mask.dim();
    let per = header.window_len * dim;
    let data = &bytes[12 + hlen..];
    if data.len() != header.labels.len() * per * 8 {
        return Err(store_err(path, "data length does not match header"));
    }
    let values: Vec<f64> = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let samples = header
        .labels
        .iter()
        .zip(values.chunks(per.max(1)))
        .map(|(label, chunk)| {
            Ok(Sample {
                window: FeatureWindow {
                    firm_id: label.firm_id.clone(),
                    event: label.event,
                    ea_date: label.ea_date,
                    mask: header.mask,
                    matrix: Tensor::new(vec![header.window_len, dim], chunk.to_vec())?,
                },
                label: label.clone(),
            })
        })
        .collect::<Result<Vec<_>, FeatureError>>()?;
    Ok((header, samples))
}
