//! Binary parameter checkpoints.
//!
//! | bytes | content |
//! |-------|---------|
//! | 8     | magic `CHGNNCK1` |
//! | 4     | format version, u32 little-endian |
//! | 8     | header length `L`, u64 little-endian |
//! | L     | UTF-8 JSON header |
//! | rest  | parameter values, f64 little-endian, row-major, in header order |
//!
//! The header is
//! `{"config": ModelConfig, "num_features": F, "num_classes": C,
//!   "split": SplitSpec | null, "params": [{"name", "rows", "cols"}, ...]}`.

use std::path::Path;

use chgnn_core::{Matrix, ModelConfig, ModelState, ParamStore, SplitSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 8] = b"CHGNNCK1";
pub const VERSION: u32 = 1;
const MAX_HEADER: u64 = 1 << 26;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    num_features: usize,
    num_classes: usize,
    split: Option<SplitSpec>,
    params: Vec<ParamEntry>,
}

/// A trained model and the split it was evaluated on.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub state: ModelState,
    pub split: Option<SplitSpec>,
}

pub fn encode(state: &ModelState, split: Option<&SplitSpec>) -> Vec<u8> {
    let header = Header {
        config: state.config.clone(),
        num_features: state.num_features,
        num_classes: state.num_classes,
        split: split.cloned(),
        params: state
            .params
            .iter()
            .map(|(name, m)| ParamEntry {
                name: name.to_string(),
                rows: m.rows(),
                cols: m.cols(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("checkpoint header serializes");
    let mut out = Vec::with_capacity(20 + json.len() + 8 * state.num_parameters());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, m) in state.params.iter() {
        for v in m.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let bad = |msg: &str| CliError::Checkpoint(msg.to_string());
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("missing CHGNNCK1 magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(CliError::Checkpoint(format!("unsupported version {version}")));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    if header_len > MAX_HEADER || 20 + header_len as usize > bytes.len() {
        return Err(bad("header length exceeds file"));
    }
    let body_start = 20 + header_len as usize;
    let header: Header =
        serde_json::from_slice(&bytes[20..body_start]).map_err(|e| CliError::Checkpoint(format!("header: {e}")))?;
    let needed: usize = header.params.iter().map(|p| p.rows * p.cols * 8).sum();
    let body = &bytes[body_start..];
    if body.len() != needed {
        return Err(CliError::Checkpoint(format!(
            "expected {needed} value bytes, found {}",
            body.len()
        )));
    }
    let mut saved = ParamStore::new();
    let mut values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    for p in &header.params {
        let data: Vec<f64> = values.by_ref().take(p.rows * p.cols).collect();
        saved.insert(p.name.clone(), Matrix::new(p.rows, p.cols, data));
    }
    let state = ModelState::from_params(header.config, header.num_features, header.num_classes, &saved)?;
    Ok(Checkpoint {
        state,
        split: header.split,
    })
}

pub fn save(path: &Path, state: &ModelState, split: Option<&SplitSpec>) -> Result<()> {
    std::fs::write(path, encode(state, split)).map_err(|e| CliError::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes)
}
