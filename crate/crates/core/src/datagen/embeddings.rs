//! Binary embedding container (`PDAE`).
//!
//! Layout, all little-endian: magic `PDAE`, `u32` version (1), `u32 n`,
//! `u32 d`, `u32 k_universe`, `u8 has_labels`, then `n·d` `f32` features in
//! row-major order, then `n` `i32` labels when `has_labels == 1`. A JSON
//! manifest with the same stem records the domain, class names and
//! provenance.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Domain, LabeledSet};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: &[u8; 4] = b"PDAE";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 * 4 + 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingManifest {
    pub domain: Domain,
    #[serde(default)]
    pub class_names: Vec<String>,
    #[serde(default)]
    pub provenance: String,
}

/// Raw contents of an embedding file; labels are optional on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub n: usize,
    pub d: usize,
    pub k_universe: usize,
    pub features: Vec<f32>,
    pub labels: Option<Vec<i32>>,
}

pub fn manifest_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes `set` (features narrowed to `f32`) and its JSON manifest.
pub fn save_embeddings(path: &Path, set: &LabeledSet, class_names: &[String], provenance: &str) -> Result<()> {
    let (n, d) = set.features.dims2();
    let mut buf = Vec::with_capacity(HEADER_LEN + n * d * 4 + n * 4);
    buf.extend_from_slice(EMBEDDING_MAGIC);
    for v in [VERSION, n as u32, d as u32, set.k_universe as u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.push(1);
    for &x in set.features.data() {
        buf.extend_from_slice(&(x as f32).to_le_bytes());
    }
    for &y in &set.labels {
        buf.extend_from_slice(&(y as i32).to_le_bytes());
    }
    fs::write(path, &buf).map_err(|e| Error::io(path, e))?;
    let manifest = EmbeddingManifest {
        domain: set.domain,
        class_names: class_names.to_vec(),
        provenance: provenance.to_string(),
    };
    let mpath = manifest_path(path);
    fs::write(&mpath, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(mpath, e))?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + len > self.bytes.len() {
            return Err(Error::Format {
                offset: self.pos,
                message: format!(
                    "truncated {what}: expected {} bytes total, file has {}",
                    self.pos + len,
                    self.bytes.len()
                ),
            });
        }
        let s = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn read_embedding_file(path: &Path) -> Result<EmbeddingFile> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_embedding_bytes(&bytes)
}

pub(crate) fn parse_embedding_bytes(bytes: &[u8]) -> Result<EmbeddingFile> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != EMBEDDING_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad magic {magic:?}, expected \"PDAE\""),
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Format {
            offset: 4,
            message: format!("unsupported version {version}"),
        });
    }
    let n = r.u32("n")? as usize;
    if n == 0 {
        return Err(Error::Format {
            offset: 8,
            message: "header declares zero samples".into(),
        });
    }
    let d = r.u32("d")? as usize;
    if d == 0 {
        return Err(Error::Format {
            offset: 12,
            message: "header declares zero feature dimension".into(),
        });
    }
    let k = r.u32("k_universe")? as usize;
    let has_labels = match r.take(1, "has_labels")?[0] {
        0 => false,
        1 => true,
        other => {
            return Err(Error::Format {
                offset: 20,
                message: format!("has_labels must be 0 or 1, got {other}"),
            })
        }
    };
    let feat = r.take(n * d * 4, "features")?;
    let features = feat
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let labels = if has_labels {
        let lab = r.take(n * 4, "labels")?;
        Some(
            lab.chunks_exact(4)
                .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        )
    } else {
        None
    };
    if r.pos != bytes.len() {
        return Err(Error::Format {
            offset: r.pos,
            message: format!("{} trailing bytes", bytes.len() - r.pos),
        });
    }
    Ok(EmbeddingFile {
        n,
        d,
        k_universe: k,
        features,
        labels,
    })
}

/// Loads a labeled embedding file, promoting features to `f64`. The domain
/// comes from the sibling manifest; without one the set is tagged as source.
pub fn load_embeddings(path: &Path) -> Result<LabeledSet> {
    let file = read_embedding_file(path)?;
    let labels = file.labels.ok_or_else(|| Error::Format {
        offset: 20,
        message: "file carries no labels".into(),
    })?;
    let labels = labels
        .into_iter()
        .enumerate()
        .map(|(i, y)| {
            usize::try_from(y).map_err(|_| Error::Format {
                offset: HEADER_LEN + file.n * file.d * 4 + i * 4,
                message: format!("negative label {y}"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mpath = manifest_path(path);
    let domain = if mpath.exists() {
        let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        serde_json::from_str::<EmbeddingManifest>(&text)?.domain
    } else {
        log::warn!("no manifest next to {}; assuming source domain", path.display());
        Domain::Source
    };
    let features = Tensor::matrix(file.n, file.d, file.features.iter().map(|&v| v as f64).collect())?;
    LabeledSet::new(features, labels, domain, file.k_universe)
}
