//! Binary embedding cache.
//!
//! Little-endian layout:
//!
//! ```text
//! "APAE"            4 bytes
//! version  u32      = 1
//! dim      u32
//! count    u64
//! meta_len u32
//! meta     meta_len bytes of UTF-8 JSON
//! data     count × dim f32, row-major
//! ```
//!
//! The metadata object carries `embedder_id`, `input_rate`, `regime_label`,
//! `window_duration_s` and `fingerprint`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EmbedError, EmbedderSpec, EmbeddingSet};

pub const MAGIC: &[u8; 4] = b"APAE";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Meta {
    embedder_id: String,
    input_rate: u32,
    regime_label: String,
    window_duration_s: f64,
    fingerprint: String,
}

pub fn encode(set: &EmbeddingSet) -> Vec<u8> {
    let meta = serde_json::to_vec(&Meta {
        embedder_id: set.embedder.id.clone(),
        input_rate: set.embedder.input_rate,
        regime_label: set.regime_label.clone(),
        window_duration_s: set.window_duration_s,
        fingerprint: set.source_fingerprint.clone(),
    })
    .expect("metadata is always serializable");
    let mut out = Vec::with_capacity(24 + meta.len() + set.as_slice().len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(set.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(set.count() as u64).to_le_bytes());
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    for v in set.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], EmbedError> {
        let end = self.pos.checked_add(n).ok_or(EmbedError::TruncatedFile)?;
        let s = self.bytes.get(self.pos..end).ok_or(EmbedError::TruncatedFile)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, EmbedError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, EmbedError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<EmbeddingSet, EmbedError> {
    let mut c = Cursor { bytes, pos: 0 };
    if bytes.len() >= 4 && &bytes[..4] != MAGIC {
        return Err(EmbedError::BadMagic);
    }
    c.take(4)?;
    let version = c.u32()?;
    if version != VERSION {
        return Err(EmbedError::VersionUnsupported(version));
    }
    let dim = c.u32()? as usize;
    let count = c.u64()?;
    let meta_len = c.u32()? as usize;
    let meta: Meta = serde_json::from_slice(c.take(meta_len)?)
        .map_err(|e| EmbedError::BadMetadata(e.to_string()))?;
    let values = usize::try_from(count)
        .ok()
        .and_then(|n| n.checked_mul(dim))
        .ok_or(EmbedError::TruncatedFile)?;
    let data = c.take(values.checked_mul(4).ok_or(EmbedError::TruncatedFile)?)?;
    if c.pos != bytes.len() {
        return Err(EmbedError::BadMetadata(format!(
            "{} trailing bytes",
            bytes.len() - c.pos
        )));
    }
    let vectors = data
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    EmbeddingSet::new(
        vectors,
        EmbedderSpec {
            id: meta.embedder_id,
            dim,
            input_rate: meta.input_rate,
        },
        meta.regime_label,
        meta.window_duration_s,
        meta.fingerprint,
    )
}

pub fn write_cache(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<(), EmbedError> {
    let path = path.as_ref();
    let io = |source| EmbedError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io)?;
    }
    // Write-then-rename so a concurrent reader never sees a partial file.
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, encode(set)).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub fn read_cache(path: impl AsRef<Path>) -> Result<EmbeddingSet, EmbedError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| EmbedError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode(&bytes)
}
