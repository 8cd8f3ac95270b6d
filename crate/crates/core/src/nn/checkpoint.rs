//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   b"DCNNCKPT"
//! u32     format version (1)
//! u64     header length, then that many bytes of JSON:
//!         { "architecture": .., "seed": .., "head": .., "labels": [..] }
//! u32     tensor count
//! per tensor, layer order, weight before bias:
//!   u32   rank
//!   u64   extent × rank
//!   f64   values, row-major
//! ```
//!
//! Identical networks and metadata always encode to identical bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{Architecture, Network};
use crate::error::{Error, Result};
use crate::heads::Head;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"DCNNCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    architecture: Architecture,
    seed: u64,
    head: Option<Head>,
    labels: Vec<String>,
}

/// A network plus the label vocabulary its outputs are indexed by.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub head: Option<Head>,
    pub labels: Vec<String>,
}

impl Checkpoint {
    pub fn new(network: Network, head: Option<Head>, labels: Vec<String>) -> Self {
        Self {
            network,
            head,
            labels,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&Header {
            architecture: self.network.architecture().clone(),
            seed: self.network.seed(),
            head: self.head,
            labels: self.labels.clone(),
        })
        .expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        let tensors: Vec<&Tensor> = self.network.params().iter().flatten().collect();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for t in tensors {
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let hlen = r.u64()? as usize;
        let header: Header = serde_json::from_slice(r.take(hlen)?)
            .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
        let count = r.u32()? as usize;
        let mut flat = Vec::with_capacity(count);
        for _ in 0..count {
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let raw = r.take(
                n.checked_mul(8)
                    .ok_or_else(|| Error::Format("tensor too large".into()))?,
            )?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            flat.push(Tensor::new(shape, data).map_err(|e| Error::Format(e.to_string()))?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        let shapes = header.architecture.shapes()?;
        let mut it = flat.into_iter();
        let mut params = Vec::with_capacity(header.architecture.layers.len());
        for (spec, input) in header.architecture.layers.iter().zip(&shapes) {
            let k = spec.param_shapes(input).len();
            let group: Vec<Tensor> = it.by_ref().take(k).collect();
            if group.len() != k {
                return Err(Error::Format("checkpoint holds too few tensors".into()));
            }
            params.push(group);
        }
        if it.next().is_some() {
            return Err(Error::Format("checkpoint holds too many tensors".into()));
        }
        let network = Network::from_parts(header.architecture, header.seed, params)?;
        Ok(Self {
            network,
            head: header.head,
            labels: header.labels,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("checkpoint truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
