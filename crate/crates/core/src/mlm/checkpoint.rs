//! Binary checkpoint container.
//!
//! Layout: 8-byte magic, u64 LE header length, JSON header, then every tensor
//! in header order as little-endian f64.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, MlmState, Params};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"VMXMLM01";

#[derive(Debug, Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    arch: Architecture,
    vocab_size: usize,
    new_row_start: usize,
    mask_id: u32,
    pad_id: u32,
    vocab_digest: String,
    tensors: Vec<TensorInfo>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::invalid(format!("checkpoint: {}", msg.into()))
}

impl MlmState {
    pub fn to_bytes(&self) -> Vec<u8> {
        let tensors = self.params.tensors();
        let header = Header {
            arch: self.arch,
            vocab_size: self.vocab_size(),
            new_row_start: self.new_row_start,
            mask_id: self.mask_id,
            pad_id: self.pad_id,
            vocab_digest: self.vocab_digest.clone(),
            tensors: tensors
                .iter()
                .map(|t| TensorInfo {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let payload: usize = tensors.iter().map(|t| t.data.len() * 8).sum();
        let mut out = Vec::with_capacity(16 + header.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for t in &tensors {
            for v in t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(16..16 + hlen).ok_or_else(|| corrupt("truncated header"))?;
        let header: Header = serde_json::from_slice(body)?;
        let mut params = Params::init(&header.arch, header.vocab_size, 0);
        let mut offset = 16 + hlen;
        {
            let slots = params.tensors_mut();
            if slots.len() != header.tensors.len() {
                return Err(corrupt("tensor count mismatch"));
            }
            for (slot, info) in slots.into_iter().zip(&header.tensors) {
                if slot.name != info.name || slot.shape != info.shape {
                    return Err(corrupt(format!("unexpected tensor {} {:?}", info.name, info.shape)));
                }
                let n = slot.data.len() * 8;
                let raw = bytes
                    .get(offset..offset + n)
                    .ok_or_else(|| corrupt("truncated payload"))?;
                for (dst, chunk) in slot.data.iter_mut().zip(raw.chunks_exact(8)) {
                    *dst = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
                }
                offset += n;
            }
        }
        if offset != bytes.len() {
            return Err(corrupt("trailing bytes"));
        }
        if header.new_row_start > header.vocab_size {
            return Err(corrupt("new_row_start beyond vocabulary"));
        }
        Ok(MlmState {
            arch: header.arch,
            params,
            new_row_start: header.new_row_start,
            mask_id: header.mask_id,
            pad_id: header.pad_id,
            vocab_digest: header.vocab_digest,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
