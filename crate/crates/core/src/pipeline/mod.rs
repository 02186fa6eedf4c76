//! End-to-end APA computation.
//!
//! A [`PairManifest`] lists songs as context files plus a stem. Windows are
//! sampled from the decoded [`Corpus`], mixed under a regime, embedded, and
//! compared as Gaussians. [`Engine`] carries embedders and embedding caches
//! between runs; [`compute_apa`] and [`run_validation`] are one-shot
//! wrappers.

mod engine;
mod manifest;
mod sampling;
pub mod synth;
mod validation;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioError;
use crate::dynamics::{DynamicsError, MixRegime};
use crate::embed::EmbedError;
use crate::perturb::{PerturbError, Transform};
use crate::stats::{Projection, StatsError};

pub use engine::{ApaReport, Candidate, EmbedderChoice, Engine, SetCounts};
pub use manifest::{Corpus, PairManifest, Song, SongEntry, MANIFEST_VERSION};
pub use sampling::{materialize, mismatch_refs, sample_refs, sample_window_pairs, WindowRef};
pub use validation::{grouped_cles, ConfigSummary, ValidationReport, ValidationRow, CSV_HEADER};

/// Cache location used when `APA_CACHE_DIR` is unset.
pub const DEFAULT_CACHE_DIR: &str = ".apa_cache";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("every song is shorter than the {duration_s}s window")]
    SongTooShort { duration_s: f64 },
    #[error("no audible window found; context or stem is silent throughout")]
    SilentCorpus,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty input")]
    EmptyInput,
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Perturb(#[from] PerturbError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

impl PipelineError {
    /// Whether the failure is numerical rather than caused by the input data.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            PipelineError::Stats(
                StatsError::NumericalFailure(_) | StatsError::DegenerateAnchor { .. } | StatsError::NonFinite
            )
        )
    }
}

/// Settings of one APA computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub regime: MixRegime,
    pub embedder: EmbedderChoice,
    pub projection: Projection,
    pub window_duration_s: f64,
    pub n_windows: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            regime: MixRegime::L0,
            embedder: EmbedderChoice::Builtin,
            projection: Projection::Np,
            window_duration_s: 5.0,
            n_windows: 10_000,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.n_windows < 2 {
            return Err(PipelineError::InvalidConfig(format!(
                "n_windows must be at least 2, got {}",
                self.n_windows
            )));
        }
        if !(self.window_duration_s.is_finite() && self.window_duration_s > 0.0) {
            return Err(PipelineError::InvalidConfig(format!(
                "window duration must be positive, got {}",
                self.window_duration_s
            )));
        }
        Ok(())
    }
}

/// `APA_CACHE_DIR` if set, else [`DEFAULT_CACHE_DIR`].
pub fn default_cache_dir() -> PathBuf {
    std::env::var_os("APA_CACHE_DIR")
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR))
}

/// Scores a candidate manifest against a reference manifest without caching.
pub fn compute_apa(
    reference: &PairManifest,
    candidate: &PairManifest,
    cfg: &RunConfig,
) -> Result<ApaReport, PipelineError> {
    let r = Corpus::load(reference)?;
    let c = if candidate == reference {
        r.clone()
    } else {
        Corpus::load(candidate)?
    };
    Engine::new(None).compute_apa(&r, Candidate::Corpus(&c), cfg)
}

/// Runs the validation grid over one manifest without caching.
pub fn run_validation(
    manifest: &PairManifest,
    transforms: &[Transform],
    grid: &[RunConfig],
) -> Result<ValidationReport, PipelineError> {
    if transforms.is_empty() || grid.is_empty() {
        return Err(PipelineError::EmptyInput);
    }
    let corpus = Corpus::load(manifest)?;
    Engine::new(None).run_validation(&corpus, transforms, grid)
}
