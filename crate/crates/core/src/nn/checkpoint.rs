//! Binary checkpoint format.
//!
//! ```text
//! magic    8 bytes  "IESGCKPT"
//! version  u32 LE
//! meta_len u64 LE
//! meta     JSON: {"tensors": [{"name", "len"}...], "extra": any}
//! data     every tensor as f64 LE, in meta order
//! ```
//!
//! Floats are stored as raw bits, so a round trip is bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"IESGCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub tensors: Vec<(String, Vec<f64>)>,
    pub extra: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    tensors: Vec<TensorMeta>,
    extra: serde_json::Value,
}

impl Checkpoint {
    pub fn push(&mut self, name: impl Into<String>, values: &[f64]) {
        self.tensors.push((name.into(), values.to_vec()));
    }

    pub fn get(&self, name: &str) -> Result<&[f64]> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = Meta {
            tensors: self
                .tensors
                .iter()
                .map(|(name, v)| TensorMeta {
                    name: name.clone(),
                    len: v.len(),
                })
                .collect(),
            extra: self.extra.clone(),
        };
        let json = serde_json::to_vec(&meta).expect("metadata serialises");
        let data_len: usize = self.tensors.iter().map(|(_, v)| v.len() * 8).sum();
        let mut out = Vec::with_capacity(20 + json.len() + data_len);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, v) in &self.tensors {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let mut word = [0u8; 4];
        read_exact(&mut r, &mut word)?;
        let version = u32::from_le_bytes(word);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
            )));
        }
        let mut long = [0u8; 8];
        read_exact(&mut r, &mut long)?;
        let meta_len = u64::from_le_bytes(long) as usize;
        if meta_len > r.len() {
            return Err(Error::Checkpoint("truncated metadata".into()));
        }
        let meta: Meta = serde_json::from_slice(&r[..meta_len])?;
        r = &r[meta_len..];
        let mut tensors = Vec::with_capacity(meta.tensors.len());
        for t in meta.tensors {
            let mut v = Vec::with_capacity(t.len);
            for _ in 0..t.len {
                read_exact(&mut r, &mut long)?;
                v.push(f64::from_le_bytes(long));
            }
            tensors.push((t.name, v));
        }
        if !r.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", r.len())));
        }
        Ok(Checkpoint {
            tensors,
            extra: meta.extra,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Checkpoint("unexpected end of checkpoint".into()))
}
