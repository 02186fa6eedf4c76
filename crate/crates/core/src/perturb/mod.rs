//! Stem perturbations used to build candidate sets with known adherence.
//!
//! Invariant transforms (identity, added noise, codec round trips through an
//! external command) should leave adherence untouched; the non-invariant ones
//! (time shift, pitch shift, both, stem substitution) should lower it.

mod derange;
mod external;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use derange::cross_group_derangement;
pub use external::external_transform;

use crate::audio::{resample_by_ratio, AudioBuffer, Boundary, Window, WindowPair};
use crate::dynamics::{integrated_loudness, DynamicsError};

/// Shift magnitudes drawn by the validation harness, in seconds.
pub const SHIFT_RANGE_S: (f64, f64) = (0.2, 3.0);
/// Pitch shift magnitudes drawn by the validation harness, in semitones.
pub const SEMITONE_RANGE: (u32, u32) = (1, 7);
/// Noise level relative to the stem's integrated loudness, in LU.
pub const NOISE_OFFSET_LU: f64 = -20.0;

#[derive(Debug, Error)]
pub enum PerturbError {
    #[error("parameter out of range: {0}")]
    OutOfRange(String),
    #[error("stem is silent; its loudness cannot be measured")]
    SilentAudio,
    #[error("need at least 2 pairs to substitute stems, got {0}")]
    TooFewPairs(usize),
    #[error("no cross-song assignment exists: one song holds {largest_group} of {total} pairs")]
    InfeasibleDerangement { largest_group: usize, total: usize },
    #[error("external command failed: {0}")]
    CommandFailed(String),
    #[error("external command returned {} samples at {} Hz, expected {} at {} Hz", actual.0, actual.1, expected.0, expected.1)]
    LengthMismatch {
        expected: (usize, u32),
        actual: (usize, u32),
    },
    #[error(transparent)]
    Dynamics(DynamicsError),
}

impl From<DynamicsError> for PerturbError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::SilentAudio | DynamicsError::SilentPart(_) => PerturbError::SilentAudio,
            other => PerturbError::Dynamics(other),
        }
    }
}

/// Which pitch shifts are accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PitchMode {
    /// 1 to 7 semitones up or down.
    #[default]
    Strict,
    /// Any shift within two octaves, including zero.
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TransformLabel {
    #[serde(rename = "TRUE")]
    True,
    #[serde(rename = "NOISE")]
    Noise,
    #[serde(rename = "EXT")]
    External,
    #[serde(rename = "TS")]
    TimeShift,
    #[serde(rename = "PS")]
    PitchShift,
    #[serde(rename = "TPS")]
    TimePitchShift,
    #[serde(rename = "SUBS")]
    Substitute,
}

impl TransformLabel {
    pub const BUILTIN: [TransformLabel; 6] = [
        TransformLabel::True,
        TransformLabel::Noise,
        TransformLabel::TimeShift,
        TransformLabel::PitchShift,
        TransformLabel::TimePitchShift,
        TransformLabel::Substitute,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TransformLabel::True => "TRUE",
            TransformLabel::Noise => "NOISE",
            TransformLabel::External => "EXT",
            TransformLabel::TimeShift => "TS",
            TransformLabel::PitchShift => "PS",
            TransformLabel::TimePitchShift => "TPS",
            TransformLabel::Substitute => "SUBS",
        }
    }
}

impl fmt::Display for TransformLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TransformLabel {
    type Err = PerturbError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            TransformLabel::External,
            TransformLabel::True,
            TransformLabel::Noise,
            TransformLabel::TimeShift,
            TransformLabel::PitchShift,
            TransformLabel::TimePitchShift,
            TransformLabel::Substitute,
        ]
        .into_iter()
        .find(|l| l.as_str().eq_ignore_ascii_case(s))
        .ok_or_else(|| PerturbError::OutOfRange(format!("unknown transform {s:?}")))
    }
}

/// A stem transformation with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    True,
    Noise { offset_lu: f64 },
    TimeShift { range_s: (f64, f64) },
    PitchShift { semitones: (u32, u32) },
    TimePitchShift { range_s: (f64, f64), semitones: (u32, u32) },
    Substitute,
    External { command: String, invariant: bool },
}

impl Transform {
    /// The built-in transform for a label with the harness defaults.
    pub fn builtin(label: TransformLabel) -> Option<Transform> {
        Some(match label {
            TransformLabel::True => Transform::True,
            TransformLabel::Noise => Transform::Noise {
                offset_lu: NOISE_OFFSET_LU,
            },
            TransformLabel::TimeShift => Transform::TimeShift {
                range_s: SHIFT_RANGE_S,
            },
            TransformLabel::PitchShift => Transform::PitchShift {
                semitones: SEMITONE_RANGE,
            },
            TransformLabel::TimePitchShift => Transform::TimePitchShift {
                range_s: SHIFT_RANGE_S,
                semitones: SEMITONE_RANGE,
            },
            TransformLabel::Substitute => Transform::Substitute,
            TransformLabel::External => return None,
        })
    }

    pub fn label(&self) -> TransformLabel {
        match self {
            Transform::True => TransformLabel::True,
            Transform::Noise { .. } => TransformLabel::Noise,
            Transform::TimeShift { .. } => TransformLabel::TimeShift,
            Transform::PitchShift { .. } => TransformLabel::PitchShift,
            Transform::TimePitchShift { .. } => TransformLabel::TimePitchShift,
            Transform::Substitute => TransformLabel::Substitute,
            Transform::External { .. } => TransformLabel::External,
        }
    }

    /// Whether adherence should be unaffected by this transform.
    pub fn invariant(&self) -> bool {
        match self {
            Transform::True | Transform::Noise { .. } => true,
            Transform::External { invariant, .. } => *invariant,
            _ => false,
        }
    }

    /// Applies a per-stem transform, drawing any random parameters from
    /// `seed`. Substitution acts on whole sets; see [`substitute_stems`].
    pub fn apply(&self, stem: &Window, seed: u64) -> Result<Window, PerturbError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            Transform::True => Ok(stem.clone()),
            Transform::Noise { offset_lu } => add_noise_at(stem, *offset_lu, rng.random()),
            Transform::TimeShift { range_s } => {
                let shift = draw_shift(&mut rng, *range_s);
                time_shift(stem, shift, Some(*range_s))
            }
            Transform::PitchShift { semitones } => {
                let st = draw_semitones(&mut rng, *semitones);
                pitch_shift_in(stem, st, *semitones)
            }
            Transform::TimePitchShift { range_s, semitones } => {
                let st = draw_semitones(&mut rng, *semitones);
                let shift = draw_shift(&mut rng, *range_s);
                let pitched = pitch_shift_in(stem, st, *semitones)?;
                time_shift(&pitched, shift, Some(*range_s))
            }
            Transform::Substitute => Err(PerturbError::OutOfRange(
                "SUBS acts on sets of pairs, not single stems".into(),
            )),
            Transform::External { command, .. } => external_transform(stem, command),
        }
    }
}

fn draw_shift(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    let magnitude = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    if rng.random::<bool>() {
        magnitude
    } else {
        -magnitude
    }
}

fn draw_semitones(rng: &mut ChaCha8Rng, (lo, hi): (u32, u32)) -> i32 {
    let magnitude = rng.random_range(lo..=hi.max(lo)) as i32;
    if rng.random::<bool>() {
        magnitude
    } else {
        -magnitude
    }
}

/// Rotates the stem circularly by `shift_s` seconds; positive shifts delay the
/// content. With `range_s` set, the shift magnitude must lie in that range.
pub fn time_shift(
    stem: &Window,
    shift_s: f64,
    range_s: Option<(f64, f64)>,
) -> Result<Window, PerturbError> {
    let magnitude = shift_s.abs();
    if !shift_s.is_finite() || magnitude > stem.duration_s + 1e-9 {
        return Err(PerturbError::OutOfRange(format!(
            "shift of {shift_s}s on a {}s window",
            stem.duration_s
        )));
    }
    if let Some((lo, hi)) = range_s {
        if magnitude < lo - 1e-12 || magnitude > hi + 1e-12 {
            return Err(PerturbError::OutOfRange(format!(
                "shift of {shift_s}s outside [{lo}, {hi}]s"
            )));
        }
    }
    let samples = stem.buffer.samples();
    let n = samples.len();
    if n == 0 {
        return Ok(stem.clone());
    }
    let k = (shift_s * stem.sample_rate() as f64).round() as i64;
    let k = k.rem_euclid(n as i64) as usize;
    let mut out = samples.to_vec();
    out.rotate_right(k);
    Ok(stem.with_buffer(stem.buffer.with_samples(out)))
}

/// Raises pitch by `semitones` while keeping the length: the stem is
/// resampled by the inverse frequency ratio, then looped or trimmed.
pub fn pitch_shift(stem: &Window, semitones: i32, mode: PitchMode) -> Result<Window, PerturbError> {
    let ok = match mode {
        PitchMode::Strict => (1..=7).contains(&semitones.unsigned_abs()),
        PitchMode::Test => semitones.unsigned_abs() <= 24,
    };
    if !ok {
        return Err(PerturbError::OutOfRange(format!("{semitones} semitones")));
    }
    Ok(pitch_shift_unchecked(stem, semitones))
}

fn pitch_shift_in(stem: &Window, semitones: i32, (lo, hi): (u32, u32)) -> Result<Window, PerturbError> {
    if !(lo..=hi).contains(&semitones.unsigned_abs()) {
        return Err(PerturbError::OutOfRange(format!("{semitones} semitones")));
    }
    Ok(pitch_shift_unchecked(stem, semitones))
}

fn pitch_shift_unchecked(stem: &Window, semitones: i32) -> Window {
    if semitones == 0 {
        return stem.clone();
    }
    let factor = 2f64.powf(semitones as f64 / 12.0);
    let squeezed = resample_by_ratio(stem.buffer.samples(), 1.0 / factor, Boundary::Zero);
    let n = stem.len();
    let out: Vec<f32> = if squeezed.is_empty() {
        vec![0.0; n]
    } else {
        (0..n).map(|i| squeezed[i % squeezed.len()]).collect()
    };
    stem.with_buffer(stem.buffer.with_samples(out))
}

/// Pitch shift followed by time shift.
pub fn time_pitch_shift(
    stem: &Window,
    shift_s: f64,
    semitones: i32,
    range_s: Option<(f64, f64)>,
    mode: PitchMode,
) -> Result<Window, PerturbError> {
    let pitched = pitch_shift(stem, semitones, mode)?;
    time_shift(&pitched, shift_s, range_s)
}

/// Adds white Gaussian noise whose integrated loudness sits 20 LU below the
/// stem's.
pub fn add_noise(stem: &Window, seed: u64) -> Result<Window, PerturbError> {
    add_noise_at(stem, NOISE_OFFSET_LU, seed)
}

/// The noise component [`add_noise`] would add, before summing.
pub fn noise_component(stem: &Window, offset_lu: f64, seed: u64) -> Result<Vec<f32>, PerturbError> {
    let stem_lufs = integrated_loudness(&stem.buffer)?.lufs;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f32> = (0..stem.len())
        .map(|_| rng.sample::<f64, _>(StandardNormal) as f32)
        .collect();
    let raw = AudioBuffer::from_trusted(raw, stem.sample_rate());
    let (scaled, _) = crate::dynamics::loudness_normalize(&raw, stem_lufs + offset_lu)?;
    Ok(scaled.into_samples())
}

fn add_noise_at(stem: &Window, offset_lu: f64, seed: u64) -> Result<Window, PerturbError> {
    let noise = noise_component(stem, offset_lu, seed)?;
    let out = stem
        .buffer
        .samples()
        .iter()
        .zip(&noise)
        .map(|(s, n)| s + n)
        .collect();
    Ok(stem.with_buffer(stem.buffer.with_samples(out)))
}

/// Moves every stem onto the context of a pair from a different song.
pub fn substitute_stems(pairs: &[WindowPair], seed: u64) -> Result<Vec<WindowPair>, PerturbError> {
    let songs: Vec<&str> = pairs.iter().map(|p| p.context.source_song_id.as_str()).collect();
    let perm = cross_group_derangement(&songs, seed)?;
    Ok(pairs
        .iter()
        .zip(&perm)
        .map(|(p, &j)| WindowPair {
            context: p.context.clone(),
            stem: pairs[j].stem.clone(),
            matched: false,
        })
        .collect())
}
