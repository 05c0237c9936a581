//! Tensor blob files: a 4-byte little-endian length, a JSON manifest of that
//! length, then every tensor as little-endian `f32` in manifest order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BlobEntry {
    pub name: String,
    pub tensor: Tensor,
}

#[derive(Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
    dtype: String,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    meta: serde_json::Value,
    tensors: Vec<TensorInfo>,
}

pub fn write_blob(path: impl AsRef<Path>, meta: serde_json::Value, entries: &[BlobEntry]) -> Result<()> {
    let path = path.as_ref();
    let manifest = Manifest {
        meta,
        tensors: entries
            .iter()
            .map(|e| TensorInfo {
                name: e.name.clone(),
                shape: e.tensor.shape().to_vec(),
                dtype: "float32".into(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&manifest)?;
    let payload: usize = entries.iter().map(|e| e.tensor.numel() * 4).sum();
    let mut out = Vec::with_capacity(4 + json.len() + payload);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for e in entries {
        for &v in e.tensor.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_blob(path: impl AsRef<Path>) -> Result<(serde_json::Value, Vec<BlobEntry>)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 4 {
        return Err(Error::Format("blob too short".into()));
    }
    let n = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
    let json = bytes
        .get(4..4 + n)
        .ok_or_else(|| Error::Format("blob manifest truncated".into()))?;
    let manifest: Manifest =
        serde_json::from_slice(json).map_err(|e| Error::Format(format!("blob manifest: {e}")))?;
    let mut offset = 4 + n;
    let mut entries = Vec::with_capacity(manifest.tensors.len());
    for info in manifest.tensors {
        if info.dtype != "float32" {
            return Err(Error::Unsupported(format!("blob dtype {}", info.dtype)));
        }
        let count: usize = info.shape.iter().product();
        let raw = bytes
            .get(offset..offset + count * 4)
            .ok_or_else(|| Error::Format(format!("blob payload for {} truncated", info.name)))?;
        offset += count * 4;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        entries.push(BlobEntry {
            name: info.name,
            tensor: Tensor::from_vec(info.shape, data)?,
        });
    }
    if offset != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after blob payload",
            bytes.len() - offset
        )));
    }
    Ok((manifest.meta, entries))
}
