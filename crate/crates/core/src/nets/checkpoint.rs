//! Checkpoint container (`PDAC`).
//!
//! Little-endian: magic `PDAC`, `u32` version (1), `u32` parameter count, then
//! per parameter a `u32` name length, UTF-8 name, `u8` lr-group tag, `u32`
//! rank, `u32` dims, and the `f64` values. A JSON sidecar holds run metadata.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ModelBundle, NetDims};
use crate::diffcore::{LrGroup, Param, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PDAC";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub method: String,
    pub hp: serde_json::Value,
    pub seed: u64,
    pub iteration: usize,
    pub dims: NetDims,
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn save_checkpoint(path: &Path, bundle: &ModelBundle, meta: &CheckpointMeta) -> Result<()> {
    let params = bundle.params();
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params {
        buf.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(p.name.as_bytes());
        buf.push(p.group.tag());
        buf.extend_from_slice(&(p.value.shape().len() as u32).to_le_bytes());
        for &d in p.value.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in p.value.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, &buf).map_err(|e| Error::io(path, e))?;
    let sc = sidecar(path);
    fs::write(&sc, serde_json::to_string_pretty(meta)?).map_err(|e| Error::io(sc, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format {
                offset: self.pos,
                message: format!("truncated checkpoint: need {} bytes, file has {}", self.pos + n, self.bytes.len()),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelBundle, CheckpointMeta)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let sc = sidecar(path);
    let meta: CheckpointMeta =
        serde_json::from_str(&fs::read_to_string(&sc).map_err(|e| Error::io(&sc, e))?)?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if c.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: "bad magic, expected \"PDAC\"".into(),
        });
    }
    let version = c.u32()?;
    if version as u32 != VERSION {
        return Err(Error::Format {
            offset: 4,
            message: format!("unsupported version {version}"),
        });
    }
    let count = c.u32()?;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let len = c.u32()?;
        let at = c.pos;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|_| Error::Format {
                offset: at,
                message: "parameter name is not UTF-8".into(),
            })?
            .to_string();
        let at = c.pos;
        let tag = c.take(1)?[0];
        let group = LrGroup::from_tag(tag).ok_or_else(|| Error::Format {
            offset: at,
            message: format!("unknown lr group tag {tag}"),
        })?;
        let rank = c.u32()?;
        let shape = (0..rank).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let data = c
            .take(n * 8)?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        params.push(Param::new(name, Tensor::new(shape, data)?, group));
    }
    if c.pos != bytes.len() {
        return Err(Error::Format {
            offset: c.pos,
            message: format!("{} trailing bytes", bytes.len() - c.pos),
        });
    }
    let bundle = ModelBundle::from_params(&meta.dims, params)?;
    Ok((bundle, meta))
}
