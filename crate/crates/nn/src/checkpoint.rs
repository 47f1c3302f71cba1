//! Single-file checkpoint container.
//!
//! ```text
//! "SEWGPT01"                      8-byte magic
//! u32 version
//! u32 n, then n bytes of config JSON
//! u32 tensor count, then per tensor:
//!     u32 name length, name bytes, u32 rank, rank × u64 dims, u64 byte offset
//! payload: little-endian f32 values, each tensor at its absolute file offset
//! ```
//! All integers are little-endian.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::CheckpointError;
use crate::params::{Layout, ModelParams};
use crate::tensor::Mat;

pub const MAGIC: &[u8; 8] = b"SEWGPT01";
pub const VERSION: u32 = 1;

/// The JSON stored in the header: the model shape plus opaque data needed to
/// use the model (codec settings, statistics, caption provider).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub pipeline: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: CheckpointConfig,
    pub params: ModelParams<f32>,
}

pub fn to_bytes(params: &ModelParams<f32>, config: &CheckpointConfig) -> Result<Vec<u8>, CheckpointError> {
    let layout = Layout::new(&config.model);
    params.check_layout(&layout).map_err(|e| CheckpointError::Config(e.to_string()))?;
    let json = serde_json::to_vec(config).map_err(|e| CheckpointError::Config(e.to_string()))?;

    let mut header = Vec::new();
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&VERSION.to_le_bytes());
    header.extend_from_slice(&(json.len() as u32).to_le_bytes());
    header.extend_from_slice(&json);
    header.extend_from_slice(&(params.tensors.len() as u32).to_le_bytes());
    let table_len: usize = layout.specs.iter().map(|s| 4 + s.name.len() + 4 + 2 * 8 + 8).sum();
    let mut offset = (header.len() + table_len) as u64;
    for (spec, t) in layout.specs.iter().zip(&params.tensors) {
        header.extend_from_slice(&(spec.name.len() as u32).to_le_bytes());
        header.extend_from_slice(spec.name.as_bytes());
        header.extend_from_slice(&2u32.to_le_bytes());
        header.extend_from_slice(&(t.rows as u64).to_le_bytes());
        header.extend_from_slice(&(t.cols as u64).to_le_bytes());
        header.extend_from_slice(&offset.to_le_bytes());
        offset += 4 * t.len() as u64;
    }
    let mut out = header;
    out.reserve(4 * params.count());
    for t in &params.tensors {
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| CheckpointError::Corrupt(format!("truncated while reading {what}")))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<Checkpoint, CheckpointError> {
    if buf.len() < MAGIC.len() || &buf[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::NotACheckpoint);
    }
    let mut r = Reader { buf, pos: MAGIC.len() };
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let n = r.u32("config length")? as usize;
    let config: CheckpointConfig =
        serde_json::from_slice(r.take(n, "config")?).map_err(|e| CheckpointError::Corrupt(format!("config JSON: {e}")))?;
    config.model.validate().map_err(|e| CheckpointError::Config(e.to_string()))?;
    let layout = Layout::new(&config.model);

    let count = r.u32("tensor count")? as usize;
    if count != layout.specs.len() {
        return Err(CheckpointError::Corrupt(format!("{count} tensors, config implies {}", layout.specs.len())));
    }
    let mut tensors = Vec::with_capacity(count);
    let mut entries = Vec::with_capacity(count);
    for spec in &layout.specs {
        let len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?).map_err(|_| CheckpointError::Corrupt("tensor name is not UTF-8".into()))?;
        if name != spec.name {
            return Err(CheckpointError::Corrupt(format!("tensor {name:?} where {:?} was expected", spec.name)));
        }
        let rank = r.u32("rank")?;
        if rank != 2 {
            return Err(CheckpointError::Corrupt(format!("{name} has rank {rank}")));
        }
        let dims = (r.u64("dims")? as usize, r.u64("dims")? as usize);
        if dims != (spec.rows, spec.cols) {
            return Err(CheckpointError::Corrupt(format!("{name} is {dims:?}, expected {:?}", (spec.rows, spec.cols))));
        }
        entries.push((dims, r.u64("offset")? as usize));
    }
    for ((rows, cols), offset) in entries {
        let bytes = rows * cols * 4;
        let end = offset.checked_add(bytes).filter(|&e| e <= buf.len());
        let end = end.ok_or_else(|| CheckpointError::Corrupt("tensor payload is truncated".into()))?;
        let data = buf[offset..end].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        tensors.push(Mat::from_vec(rows, cols, data));
    }
    let expected_end = tensors.iter().map(|t| 4 * t.len()).sum::<usize>() + r.pos;
    if buf.len() != expected_end {
        return Err(CheckpointError::Corrupt(format!("{} bytes, expected {expected_end}", buf.len())));
    }
    Ok(Checkpoint { config, params: ModelParams { tensors } })
}

pub fn save_checkpoint(path: &Path, params: &ModelParams<f32>, config: &CheckpointConfig) -> Result<(), CheckpointError> {
    let bytes = to_bytes(params, config)?;
    std::fs::write(path, bytes).map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })?;
    from_bytes(&bytes)
}
