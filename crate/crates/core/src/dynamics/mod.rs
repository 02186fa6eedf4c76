//! Peak and loudness measurement, normalization, limiting and the
//! context/stem mix regimes.

mod limiter;
mod loudness;
mod regime;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use limiter::{limit, Limiter};
pub use loudness::{integrated_loudness, loudness_normalize, LoudnessReading};
pub use regime::{mix, mix_parts, MixParts, MixRegime, RegimeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Context,
    Stem,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Context => "context",
            Side::Stem => "stem",
        })
    }
}

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("audio is digital silence")]
    SilentAudio,
    #[error("{0} is silent and cannot be normalized")]
    SilentPart(Side),
    #[error("{samples} samples is shorter than one 400 ms gating block ({required})")]
    TooShort { samples: usize, required: usize },
    #[error("context and stem differ in length or rate")]
    ShapeMismatch,
    #[error("unknown mix regime {0:?} (expected PP, P0, P1, P2, L0, L1 or L2)")]
    UnknownRegime(String),
}

impl DynamicsError {
    fn for_side(self, side: Side) -> Self {
        match self {
            DynamicsError::SilentAudio => DynamicsError::SilentPart(side),
            other => other,
        }
    }
}

pub(crate) fn peak_amplitude(samples: &[f32]) -> f64 {
    samples.iter().fold(0.0f64, |m, &s| m.max(s.abs() as f64))
}

pub(crate) fn scale(samples: &[f32], gain: f64) -> Vec<f32> {
    samples.iter().map(|&s| (s as f64 * gain) as f32).collect()
}

/// Peak level in dBFS.
pub fn peak_of(samples: &[f32]) -> Result<f64, DynamicsError> {
    let peak = peak_amplitude(samples);
    if peak == 0.0 {
        return Err(DynamicsError::SilentAudio);
    }
    Ok(20.0 * peak.log10())
}

/// Scales samples so their peak sits at `target_db` dBFS.
pub fn peak_normalize(samples: &[f32], target_db: f64) -> Result<Vec<f32>, DynamicsError> {
    let peak = peak_amplitude(samples);
    if peak == 0.0 {
        return Err(DynamicsError::SilentAudio);
    }
    let gain = 10f64.powf(target_db / 20.0) / peak;
    if gain == 1.0 {
        return Ok(samples.to_vec());
    }
    Ok(scale(samples, gain))
}
