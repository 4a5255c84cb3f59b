//! Checkpoint file: `b"TLM1"`, a little-endian `u64` header length, a UTF-8
//! JSON header (config + tensor manifest) and a contiguous little-endian
//! `f32` payload.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::{ModelConfig, TinyLm};

pub const MAGIC: &[u8; 4] = b"TLM1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("file truncated: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("tensor {name}: {detail}")]
    Shape { name: String, detail: String },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    /// Byte offset into the payload.
    pub offset: usize,
    pub len_bytes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Header {
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
}

pub fn to_bytes(model: &TinyLm) -> Vec<u8> {
    let mut entries = Vec::new();
    let mut payload = Vec::new();
    for t in model.tensors() {
        entries.push(TensorEntry {
            name: t.name,
            shape: t.shape,
            dtype: "f32".into(),
            offset: payload.len(),
            len_bytes: t.data.len() * 4,
        });
        for &v in t.data {
            payload.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let header = serde_json::to_vec(&Header {
        config: model.config,
        tensors: entries,
    })
    .expect("header serialises");
    let mut out = Vec::with_capacity(12 + header.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<TinyLm, CheckpointError> {
    if bytes.len() < 12 {
        return Err(CheckpointError::Truncated {
            need: 12,
            have: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let hlen = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes")) as usize;
    let payload_start = 12usize
        .checked_add(hlen)
        .ok_or_else(|| CheckpointError::Header("header length overflow".into()))?;
    if bytes.len() < payload_start {
        return Err(CheckpointError::Truncated {
            need: payload_start,
            have: bytes.len(),
        });
    }
    let header: Header = serde_json::from_slice(&bytes[12..payload_start])
        .map_err(|e| CheckpointError::Header(e.to_string()))?;
    let payload = &bytes[payload_start..];
    let mut model = TinyLm::zeros(header.config).map_err(|e| CheckpointError::Header(e.to_string()))?;
    let expected: Vec<(String, Vec<usize>)> = model
        .tensors()
        .into_iter()
        .map(|t| (t.name, t.shape))
        .collect();
    if expected.len() != header.tensors.len() {
        return Err(CheckpointError::Header(format!(
            "expected {} tensors, manifest lists {}",
            expected.len(),
            header.tensors.len()
        )));
    }
    for ((name, shape), entry) in expected.iter().zip(&header.tensors) {
        let shape_err = |detail: String| CheckpointError::Shape {
            name: entry.name.clone(),
            detail,
        };
        if &entry.name != name {
            return Err(CheckpointError::Header(format!(
                "expected tensor {name}, found {}",
                entry.name
            )));
        }
        if entry.dtype != "f32" {
            return Err(shape_err(format!("unsupported dtype {}", entry.dtype)));
        }
        if &entry.shape != shape {
            return Err(shape_err(format!("shape {:?}, config implies {:?}", entry.shape, shape)));
        }
        let numel: usize = shape.iter().product();
        if entry.len_bytes != numel * 4 {
            return Err(shape_err(format!(
                "declares {} bytes, shape implies {}",
                entry.len_bytes,
                numel * 4
            )));
        }
        let end = entry.offset + entry.len_bytes;
        if payload.len() < end {
            return Err(CheckpointError::Truncated {
                need: payload_start + end,
                have: bytes.len(),
            });
        }
    }
    for (dst, entry) in model.tensors_mut().into_iter().zip(&header.tensors) {
        let src = &payload[entry.offset..entry.offset + entry.len_bytes];
        for (d, c) in dst.iter_mut().zip(src.chunks_exact(4)) {
            *d = f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64;
        }
    }
    Ok(model)
}

pub fn save_checkpoint(model: &TinyLm, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    fs::write(path, to_bytes(model)).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TinyLm, CheckpointError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_bytes(&bytes)
}
