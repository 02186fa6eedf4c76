use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::loudness::BlockPowers;
use super::{limit, peak_amplitude, scale, DynamicsError, Side};
use crate::audio::{AudioBuffer, WindowPair};

/// Level-setting rule applied to context and stem before they are summed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MixRegime {
    /// Original relative levels; the mix is brought to the louder part's peak.
    PP,
    P0,
    P1,
    P2,
    L0,
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeKind {
    Peak,
    Loudness,
}

impl MixRegime {
    pub const ALL: [MixRegime; 7] = [
        MixRegime::PP,
        MixRegime::P0,
        MixRegime::P1,
        MixRegime::P2,
        MixRegime::L0,
        MixRegime::L1,
        MixRegime::L2,
    ];

    pub fn label(self) -> &'static str {
        match self {
            MixRegime::PP => "PP",
            MixRegime::P0 => "P0",
            MixRegime::P1 => "P1",
            MixRegime::P2 => "P2",
            MixRegime::L0 => "L0",
            MixRegime::L1 => "L1",
            MixRegime::L2 => "L2",
        }
    }

    pub fn kind(self) -> RegimeKind {
        match self {
            MixRegime::PP | MixRegime::P0 | MixRegime::P1 | MixRegime::P2 => RegimeKind::Peak,
            _ => RegimeKind::Loudness,
        }
    }

    pub fn preserve_relative(self) -> bool {
        self == MixRegime::PP
    }

    /// (context, stem) targets: dBFS peak for peak regimes, LUFS for loudness
    /// regimes. `None` for PP.
    pub fn targets(self) -> Option<(f64, f64)> {
        match self {
            MixRegime::PP => None,
            MixRegime::P0 => Some((-3.0, -3.0)),
            MixRegime::P1 => Some((-3.0, -6.0)),
            MixRegime::P2 => Some((-3.0, -9.0)),
            MixRegime::L0 => Some((-20.0, -20.0)),
            MixRegime::L1 => Some((-20.0, -23.0)),
            MixRegime::L2 => Some((-20.0, -26.0)),
        }
    }
}

impl fmt::Display for MixRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for MixRegime {
    type Err = DynamicsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MixRegime::ALL
            .into_iter()
            .find(|r| r.label() == s)
            .ok_or_else(|| DynamicsError::UnknownRegime(s.to_string()))
    }
}

/// The level-adjusted parts (before summing) and the final mixdown.
#[derive(Debug, Clone)]
pub struct MixParts {
    pub context: Vec<f32>,
    pub stem: Vec<f32>,
    pub output: AudioBuffer,
    /// Sides whose loudness had to be measured without gating.
    pub ungated: Vec<Side>,
}

/// Mixes a window pair under `regime` and limits the result.
pub fn mix(pair: &WindowPair, regime: MixRegime) -> Result<AudioBuffer, DynamicsError> {
    mix_parts(pair, regime).map(|p| p.output)
}

/// Like [`mix`], but also returns the pre-sum parts.
pub fn mix_parts(pair: &WindowPair, regime: MixRegime) -> Result<MixParts, DynamicsError> {
    let ctx = &pair.context.buffer;
    let stem = &pair.stem.buffer;
    if ctx.len() != stem.len() || ctx.sample_rate() != stem.sample_rate() {
        return Err(DynamicsError::ShapeMismatch);
    }
    let rate = ctx.sample_rate();
    let mut ungated = Vec::new();

    let (context, stem_part) = match (regime.kind(), regime.targets()) {
        (_, None) => (ctx.samples().to_vec(), stem.samples().to_vec()),
        (RegimeKind::Peak, Some((ct, st))) => (
            peak_part(ctx.samples(), ct, Side::Context)?,
            peak_part(stem.samples(), st, Side::Stem)?,
        ),
        (RegimeKind::Loudness, Some((ct, st))) => (
            loudness_part(ctx, ct, Side::Context, &mut ungated)?,
            loudness_part(stem, st, Side::Stem, &mut ungated)?,
        ),
    };

    let mut sum: Vec<f32> = context.iter().zip(&stem_part).map(|(a, b)| a + b).collect();
    if regime.preserve_relative() {
        let target = peak_amplitude(ctx.samples()).max(peak_amplitude(stem.samples()));
        let current = peak_amplitude(&sum);
        if current > 0.0 && target > 0.0 {
            sum = scale(&sum, target / current);
        }
    }
    Ok(MixParts {
        context,
        stem: stem_part,
        output: AudioBuffer::from_trusted(limit(&sum, rate), rate),
        ungated,
    })
}

fn peak_part(samples: &[f32], target_db: f64, side: Side) -> Result<Vec<f32>, DynamicsError> {
    super::peak_normalize(samples, target_db).map_err(|e| e.for_side(side))
}

fn loudness_part(
    buf: &AudioBuffer,
    target: f64,
    side: Side,
    ungated: &mut Vec<Side>,
) -> Result<Vec<f32>, DynamicsError> {
    let powers = BlockPowers::measure(buf).map_err(|e| e.for_side(side))?;
    let reading = powers.integrated(1.0).map_err(|e| e.for_side(side))?;
    if reading.ungated_fallback {
        log::warn!("{side} has no block above the absolute gate; normalizing ungated loudness");
        ungated.push(side);
    }
    let gain = powers.gain_for(target).map_err(|e| e.for_side(side))?;
    Ok(scale(buf.samples(), gain))
}
