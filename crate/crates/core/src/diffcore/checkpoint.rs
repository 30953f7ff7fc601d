//! Parameter checkpoint container.
//!
//! Layout: one line of compact JSON (the header) terminated by `\n`, then the
//! raw tensor payloads as little-endian `f64`, concatenated in header order.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    #[serde(default)]
    pub frozen: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub model_kind: String,
    pub config: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

pub fn encode(model_kind: &str, config: serde_json::Value, params: &ParamStore) -> Result<Vec<u8>> {
    let tensors: Vec<TensorEntry> = params
        .iter()
        .map(|(name, t)| TensorEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            frozen: params.is_frozen(name),
        })
        .collect();
    let header = CheckpointHeader {
        format_version: FORMAT_VERSION,
        model_kind: model_kind.to_string(),
        config,
        tensors,
    };
    let mut bytes = serde_json::to_vec(&header)?;
    bytes.push(b'\n');
    for (_, t) in params.iter() {
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(bytes)
}

pub fn decode(bytes: &[u8]) -> Result<(CheckpointHeader, ParamStore)> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Checkpoint("missing header terminator".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[..newline])?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    let mut payload = &bytes[newline + 1..];
    let mut params = ParamStore::new();
    for entry in &header.tensors {
        let n: usize = entry.shape.iter().product();
        if payload.len() < n * 8 {
            return Err(Error::Checkpoint(format!("truncated payload for `{}`", entry.name)));
        }
        let data = payload[..n * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        payload = &payload[n * 8..];
        params.insert(&entry.name, Tensor::new(entry.shape.clone(), data)?);
        if entry.frozen {
            params.freeze(&entry.name);
        }
    }
    if !payload.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", payload.len())));
    }
    Ok((header, params))
}

pub fn save(path: &Path, model_kind: &str, config: serde_json::Value, params: &ParamStore) -> Result<String> {
    let bytes = encode(model_kind, config, params)?;
    std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(checksum(&bytes))
}

pub fn load(path: &Path) -> Result<(CheckpointHeader, ParamStore)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Hex SHA-256 of a byte buffer.
pub fn checksum(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_values_and_frozen_flags() {
        let mut p = ParamStore::new();
        p.insert("a", Tensor::matrix(2, 2, vec![1.0, -0.5, 3.25, f64::MIN_POSITIVE]).unwrap());
        p.insert("t", Tensor::vector(vec![0.6, 0.8]));
        p.freeze("t");
        let bytes = encode("ncr", serde_json::json!({"d": 2}), &p).unwrap();
        let (header, q) = decode(&bytes).unwrap();
        assert_eq!(header.model_kind, "ncr");
        assert_eq!(header.config["d"], 2);
        assert_eq!(q, p);
        assert!(q.is_frozen("t"));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let mut p = ParamStore::new();
        p.insert("a", Tensor::vector(vec![1.0, 2.0]));
        let bytes = encode("ncr", serde_json::Value::Null, &p).unwrap();
        assert!(matches!(decode(&bytes[..bytes.len() - 3]), Err(Error::Checkpoint(_))));
    }
}
