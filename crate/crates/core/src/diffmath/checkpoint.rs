//! `TCNW` parameter checkpoints.
//!
//! Layout, all little-endian: magic `TCNW`, u16 version, u32 tensor count;
//! then per tensor a header of u16 name length, UTF-8 name, u32 rank and
//! u32 dims; then the f32 payloads of all tensors in header order.

use std::path::Path;

use super::tensor::Tensor;
use crate::codec::{put_f32s, Reader};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"TCNW";
const VERSION: u16 = 1;

/// Ordered list of named `f32` tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<f32>) {
        self.tensors.push((name.into(), tensor));
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<f32>> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::format("TCNW", format!("missing tensor {name:?}")))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
        }
        for (_, t) in &self.tensors {
            put_f32s(&mut out, t.data().iter().copied());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new("TCNW", bytes);
        r.magic(MAGIC)?;
        let version = r.u16("version")?;
        if version != VERSION {
            return Err(Error::format("TCNW", format!("unsupported version {version}")));
        }
        let count = r.u32("tensor count")? as usize;
        let mut headers = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let len = r.u16("name length")? as usize;
            let name = std::str::from_utf8(r.take(len, "tensor name")?)
                .map_err(|e| Error::format("TCNW", format!("tensor name is not UTF-8: {e}")))?
                .to_owned();
            let rank = r.u32("rank")? as usize;
            if rank > 8 {
                return Err(Error::format("TCNW", format!("tensor {name:?} has rank {rank}")));
            }
            let shape = (0..rank)
                .map(|_| r.u32("dimension").map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            headers.push((name, shape));
        }
        let mut tensors = Vec::with_capacity(headers.len());
        for (name, shape) in headers {
            let n = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::format("TCNW", format!("tensor {name:?} size overflows")))?;
            let data = r.f32_vec(n, "tensor payload")?;
            tensors.push((name, Tensor::new(shape, data)?));
        }
        r.finish()?;
        Ok(Checkpoint { tensors })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}
