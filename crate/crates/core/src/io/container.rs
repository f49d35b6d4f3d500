use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// File signature.
pub const MAGIC: &[u8; 8] = b"CBCLISTA";
/// Current container format version.
pub const FORMAT_VERSION: u32 = 1;
/// Magic + version + header length.
pub const PREAMBLE_LEN: usize = 8 + 4 + 8;

/// A named dense block of `f64` values in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Block {
    pub fn matrix(name: impl Into<String>, a: &ndarray::Array2<f64>) -> Self {
        Block {
            name: name.into(),
            shape: vec![a.nrows(), a.ncols()],
            data: a.as_standard_layout().iter().copied().collect(),
        }
    }

    pub fn vector(name: impl Into<String>, v: &[f64]) -> Self {
        Block {
            name: name.into(),
            shape: vec![v.len()],
            data: v.to_vec(),
        }
    }

    pub fn to_matrix(&self) -> Result<ndarray::Array2<f64>> {
        if self.shape.len() != 2 {
            return Err(Error::Format(format!("block '{}' is not a matrix", self.name)));
        }
        ndarray::Array2::from_shape_vec((self.shape[0], self.shape[1]), self.data.clone())
            .map_err(|e| Error::Format(format!("block '{}': {e}", self.name)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BlockHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    kind: String,
    meta: serde_json::Value,
    blocks: Vec<BlockHeader>,
}

/// Self-describing artifact: magic, version, JSON header, then the blocks'
/// little-endian `f64` payload in declared order.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: String,
    pub meta: serde_json::Value,
    pub blocks: Vec<Block>,
}

impl Container {
    pub fn new(kind: impl Into<String>, meta: serde_json::Value, blocks: Vec<Block>) -> Self {
        Container {
            kind: kind.into(),
            meta,
            blocks,
        }
    }

    fn header_bytes(&self) -> Result<Vec<u8>> {
        let h = Header {
            format_version: FORMAT_VERSION,
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockHeader {
                    name: b.name.clone(),
                    shape: b.shape.clone(),
                })
                .collect(),
        };
        serde_json::to_vec(&h).map_err(|e| Error::Format(e.to_string()))
    }

    /// Bytes before the payload.
    pub fn envelope_len(&self) -> Result<usize> {
        Ok(PREAMBLE_LEN + self.header_bytes()?.len())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        for b in &self.blocks {
            if b.shape.iter().product::<usize>() != b.data.len() {
                return Err(Error::Format(format!(
                    "block '{}' has {} values for shape {:?}",
                    b.name,
                    b.data.len(),
                    b.shape
                )));
            }
        }
        let header = self.header_bytes()?;
        let payload: usize = self.blocks.iter().map(|b| b.data.len() * 8).sum();
        let mut out = Vec::with_capacity(PREAMBLE_LEN + header.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for b in &self.blocks {
            for v in &b.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < PREAMBLE_LEN || &bytes[..8] != MAGIC {
            return Err(Error::Format("not a container file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = &bytes[PREAMBLE_LEN..];
        if body.len() < hlen {
            return Err(Error::Format("truncated header".into()));
        }
        let header: Header =
            serde_json::from_slice(&body[..hlen]).map_err(|e| Error::Format(format!("header: {e}")))?;
        if header.format_version != version {
            return Err(Error::Format("header version disagrees with preamble".into()));
        }
        let mut payload = &body[hlen..];
        let mut blocks = Vec::with_capacity(header.blocks.len());
        for bh in header.blocks {
            let n: usize = bh.shape.iter().product();
            if payload.len() < n * 8 {
                return Err(Error::Format(format!("truncated payload in block '{}'", bh.name)));
            }
            let data = payload[..n * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            payload = &payload[n * 8..];
            blocks.push(Block {
                name: bh.name,
                shape: bh.shape,
                data,
            });
        }
        if !payload.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes", payload.len())));
        }
        Ok(Container {
            kind: header.kind,
            meta: header.meta,
            blocks,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Format(format!(
                "expected a '{kind}' artifact, found '{}'",
                self.kind
            )));
        }
        Ok(())
    }
}
