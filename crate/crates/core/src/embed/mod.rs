//! Embedding extraction.
//!
//! An [`Embedder`] maps a mixdown to one fixed-dimension vector. Two
//! implementations ship: [`LogMelEmbedder`], a deterministic spectral
//! summary that needs no model, and [`BridgeClient`], which forwards audio to
//! an external process speaking the framed stdio protocol in [`protocol`].
//! Sets of embeddings can be cached on disk in the format in [`cache`].

pub mod cache;
mod bridge;
mod logmel;
pub mod protocol;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioBuffer;

pub use bridge::{BridgeClient, DEFAULT_BRIDGE_TIMEOUT_S};
pub use cache::{read_cache, write_cache};
pub use logmel::{builtin_logmel_embed, LogMelEmbedder, BUILTIN_ID, LOG_FLOOR, MEL_BANDS};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("bridge: {0}")]
    Bridge(String),
    #[error("bridge protocol violation: {0}")]
    Protocol(String),
    #[error("bridge timed out after {0:?}")]
    Timeout(std::time::Duration),
    #[error("embedder declared dimension {expected} but produced {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("embedder expects {expected} Hz input, got {actual} Hz")]
    RateMismatch { expected: u32, actual: u32 },
    #[error("{samples} samples is shorter than one {frame}-sample analysis frame")]
    TooShort { samples: usize, frame: usize },
    #[error("invalid embedding set: {0}")]
    InvalidSet(String),
    #[error("cache file has wrong magic bytes")]
    BadMagic,
    #[error("cache format version {0} is not supported")]
    VersionUnsupported(u32),
    #[error("cache file is truncated")]
    TruncatedFile,
    #[error("cache metadata is malformed: {0}")]
    BadMetadata(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Identity and shape of an embedder.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EmbedderSpec {
    pub id: String,
    pub dim: usize,
    pub input_rate: u32,
}

/// Anything that turns mixdowns into vectors.
pub trait Embedder: Send {
    fn spec(&self) -> &EmbedderSpec;

    /// One vector per buffer, in input order. Buffers are already at
    /// `spec().input_rate`.
    fn embed_batch(&mut self, windows: &[AudioBuffer]) -> Result<Vec<Vec<f32>>, EmbedError>;
}

/// Embeds `windows` and checks rates, dimensions and finiteness.
pub fn embed_checked(
    embedder: &mut dyn Embedder,
    windows: &[AudioBuffer],
) -> Result<Vec<Vec<f32>>, EmbedError> {
    let spec = embedder.spec().clone();
    if let Some(w) = windows.iter().find(|w| w.sample_rate() != spec.input_rate) {
        return Err(EmbedError::RateMismatch {
            expected: spec.input_rate,
            actual: w.sample_rate(),
        });
    }
    let rows = embedder.embed_batch(windows)?;
    if rows.len() != windows.len() {
        return Err(EmbedError::Protocol(format!(
            "{} vectors for {} windows",
            rows.len(),
            windows.len()
        )));
    }
    for row in &rows {
        if row.len() != spec.dim {
            return Err(EmbedError::DimensionMismatch {
                expected: spec.dim,
                actual: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::InvalidSet("embedder produced a non-finite value".into()));
        }
    }
    Ok(rows)
}

/// Embeds a single mixdown.
pub fn embed_window(mixdown: &AudioBuffer, embedder: &mut dyn Embedder) -> Result<Vec<f32>, EmbedError> {
    let mut rows = embed_checked(embedder, std::slice::from_ref(mixdown))?;
    Ok(rows.pop().expect("one row per window"))
}

/// An N×D matrix of embeddings with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    vectors: Vec<f32>,
    count: usize,
    pub embedder: EmbedderSpec,
    pub regime_label: String,
    pub window_duration_s: f64,
    pub source_fingerprint: String,
}

impl EmbeddingSet {
    /// `vectors` is row-major with `embedder.dim` columns.
    pub fn new(
        vectors: Vec<f32>,
        embedder: EmbedderSpec,
        regime_label: impl Into<String>,
        window_duration_s: f64,
        source_fingerprint: impl Into<String>,
    ) -> Result<Self, EmbedError> {
        let dim = embedder.dim;
        if dim == 0 {
            return Err(EmbedError::InvalidSet("dimension must be positive".into()));
        }
        if vectors.is_empty() || !vectors.len().is_multiple_of(dim) {
            return Err(EmbedError::InvalidSet(format!(
                "{} values do not form rows of {dim}",
                vectors.len()
            )));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::InvalidSet("non-finite value".into()));
        }
        Ok(EmbeddingSet {
            count: vectors.len() / dim,
            vectors,
            embedder,
            regime_label: regime_label.into(),
            window_duration_s,
            source_fingerprint: source_fingerprint.into(),
        })
    }

    pub fn from_rows(
        rows: &[Vec<f32>],
        embedder: EmbedderSpec,
        regime_label: impl Into<String>,
        window_duration_s: f64,
        source_fingerprint: impl Into<String>,
    ) -> Result<Self, EmbedError> {
        if let Some(r) = rows.iter().find(|r| r.len() != embedder.dim) {
            return Err(EmbedError::DimensionMismatch {
                expected: embedder.dim,
                actual: r.len(),
            });
        }
        let flat = rows.iter().flatten().copied().collect();
        Self::new(flat, embedder, regime_label, window_duration_s, source_fingerprint)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.embedder.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let d = self.dim();
        &self.vectors[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.vectors.chunks_exact(self.dim())
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.vectors
    }

    /// Rows as an `N × D` double-precision matrix.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_iterator(self.count, self.dim(), self.vectors.iter().map(|&v| v as f64))
    }
}
