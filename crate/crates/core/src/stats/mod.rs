//! Gaussian statistics, projections, Fréchet distance, the APA score and
//! the common-language effect size.

mod frechet;
mod gaussian;
mod pca;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::WindowPair;
use crate::perturb::{substitute_stems, PerturbError};

pub use frechet::frechet_distance;
pub use gaussian::{fit_gaussian, GaussianStats};
pub use pca::{fit_pca, fit_pca_matrix, project, PcaProjection, Projection};

/// Smallest reference-to-mismatch distance accepted as an anchor.
pub const ANCHOR_EPSILON: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("{n} samples given, at least {required} needed")]
    TooFewSamples { n: usize, required: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid statistics: {0}")]
    InvalidStats(String),
    #[error("invalid projection: {0}")]
    InvalidProjection(String),
    #[error("non-finite value in input")]
    NonFinite,
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("reference and mismatched reference are indistinguishable (FAD {fad_rrp:e})")]
    DegenerateAnchor { fad_rrp: f64 },
    #[error("empty input")]
    EmptyInput,
    #[error(transparent)]
    Perturb(#[from] PerturbError),
}

/// The three anchor distances and the resulting score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApaResult {
    pub fad_cr: f64,
    pub fad_crp: f64,
    pub fad_rrp: f64,
    pub apa_raw: f64,
    pub apa: f64,
    pub clipped: bool,
}

impl ApaResult {
    pub fn from_distances(fad_cr: f64, fad_crp: f64, fad_rrp: f64) -> Result<Self, StatsError> {
        if ![fad_cr, fad_crp, fad_rrp].iter().all(|v| v.is_finite()) {
            return Err(StatsError::NonFinite);
        }
        if fad_rrp <= ANCHOR_EPSILON {
            return Err(StatsError::DegenerateAnchor { fad_rrp });
        }
        let apa_raw = 0.5 + (fad_crp - fad_cr) / (2.0 * fad_rrp);
        let apa = apa_raw.clamp(0.0, 1.0);
        Ok(ApaResult {
            fad_cr,
            fad_crp,
            fad_rrp,
            apa_raw,
            apa,
            clipped: apa != apa_raw,
        })
    }
}

/// Scores candidate `c` against the matched reference `r` and the
/// mismatched reference `r_prime`.
pub fn apa_score(c: &GaussianStats, r: &GaussianStats, r_prime: &GaussianStats) -> Result<ApaResult, StatsError> {
    let (fad_cr, (fad_crp, fad_rrp)) = rayon::join(
        || frechet_distance(c, r),
        || rayon::join(|| frechet_distance(c, r_prime), || frechet_distance(r, r_prime)),
    );
    ApaResult::from_distances(fad_cr?, fad_crp?, fad_rrp?)
}

/// Re-pairs every stem with a context from another song.
pub fn mismatch_pairs(reference: &[WindowPair], seed: u64) -> Result<Vec<WindowPair>, StatsError> {
    Ok(substitute_stems(reference, seed)?)
}

/// Probability that a score drawn from `invariant` exceeds one drawn from
/// `noninvariant`, ties counting one half.
pub fn cles(invariant: &[f64], noninvariant: &[f64]) -> Result<f64, StatsError> {
    if invariant.is_empty() || noninvariant.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    if invariant.iter().chain(noninvariant).any(|v| v.is_nan()) {
        return Err(StatsError::NonFinite);
    }
    let mut sorted = noninvariant.to_vec();
    sorted.sort_by(f64::total_cmp);
    let doubled: u64 = invariant
        .iter()
        .map(|&x| {
            let below = sorted.partition_point(|&y| y < x) as u64;
            let ties = sorted.partition_point(|&y| y <= x) as u64 - below;
            2 * below + ties
        })
        .sum();
    Ok(doubled as f64 / (2 * invariant.len() * noninvariant.len()) as f64)
}
