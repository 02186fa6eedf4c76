//! Integrated loudness per ITU-R BS.1770-4.
//!
//! K-weighting is two cascaded biquads (a high shelf modelling head
//! acoustics, then a high-pass). The filtered signal is cut into 400 ms
//! blocks on a 100 ms hop, gated absolutely at -70 LUFS and then relatively
//! at 10 LU below the mean of the blocks that survived the absolute gate.

use super::DynamicsError;
use crate::audio::AudioBuffer;

const ABSOLUTE_GATE_LUFS: f64 = -70.0;
const RELATIVE_GATE_LU: f64 = -10.0;
const BLOCK_S: f64 = 0.4;
const HOP_S: f64 = 0.1;
const LOUDNESS_OFFSET: f64 = -0.691;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoudnessReading {
    pub lufs: f64,
    /// Blocks that passed both gates. Zero when the ungated fallback was used.
    pub gated_blocks: usize,
    /// No block cleared the absolute gate and the reading is the mean-square
    /// loudness over the whole buffer instead.
    pub ungated_fallback: bool,
}

#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn run(&self, input: &mut [f64]) {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        for s in input.iter_mut() {
            let x0 = *s;
            let y0 = self.b[0] * x0 + self.b[1] * x1 + self.b[2] * x2 - self.a[0] * y1 - self.a[1] * y2;
            x2 = x1;
            x1 = x0;
            y2 = y1;
            y1 = y0;
            *s = y0;
        }
    }
}

/// The two K-weighting stages for a given rate.
fn k_weighting(sample_rate: u32) -> [Biquad; 2] {
    if sample_rate == 48_000 {
        // Tabulated in the standard.
        return [
            Biquad {
                b: [1.535_124_859_586_97, -2.691_696_189_406_38, 1.198_392_810_852_85],
                a: [-1.690_659_293_182_41, 0.732_480_774_215_85],
            },
            Biquad {
                b: [1.0, -2.0, 1.0],
                a: [-1.990_047_454_833_98, 0.990_072_250_366_21],
            },
        ];
    }
    // Other rates: bilinear transform of the analog prototypes the 48 kHz
    // table was derived from.
    let fs = sample_rate as f64;
    let pi = std::f64::consts::PI;

    let f0 = 1_681.974_450_955_533;
    let gain_db = 3.999_843_853_973_347;
    let q = 0.707_175_236_955_419_6;
    let k = (pi * f0 / fs).tan();
    let vh = 10f64.powf(gain_db / 20.0);
    let vb = vh.powf(0.499_666_774_154_541_6);
    let a0 = 1.0 + k / q + k * k;
    let shelf = Biquad {
        b: [
            (vh + vb * k / q + k * k) / a0,
            2.0 * (k * k - vh) / a0,
            (vh - vb * k / q + k * k) / a0,
        ],
        a: [2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0],
    };

    let f0 = 38.135_470_876_024_44;
    let q = 0.500_327_037_323_877_3;
    let k = (pi * f0 / fs).tan();
    let a0 = 1.0 + k / q + k * k;
    let highpass = Biquad {
        b: [1.0, -2.0, 1.0],
        a: [2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0],
    };
    [shelf, highpass]
}

/// Mean-square power of each gating block of the K-weighted signal.
///
/// Scaling the input by `g` scales every block power by exactly `g²`, which
/// lets normalization solve for a gain without refiltering.
#[derive(Debug, Clone)]
pub(crate) struct BlockPowers {
    blocks: Vec<f64>,
    whole: f64,
}

impl BlockPowers {
    pub(crate) fn measure(buf: &AudioBuffer) -> Result<BlockPowers, DynamicsError> {
        let rate = buf.sample_rate() as f64;
        let block = (BLOCK_S * rate).round() as usize;
        let hop = (HOP_S * rate).round() as usize;
        if buf.len() < block || block == 0 {
            return Err(DynamicsError::TooShort {
                samples: buf.len(),
                required: block,
            });
        }
        if buf.samples().iter().all(|&s| s == 0.0) {
            return Err(DynamicsError::SilentAudio);
        }
        let mut y: Vec<f64> = buf.samples().iter().map(|&s| s as f64).collect();
        for stage in k_weighting(buf.sample_rate()) {
            stage.run(&mut y);
        }
        let mut prefix = Vec::with_capacity(y.len() + 1);
        let mut acc = 0.0;
        prefix.push(0.0);
        for v in &y {
            acc += v * v;
            prefix.push(acc);
        }
        let count = (y.len() - block) / hop + 1;
        let blocks = (0..count)
            .map(|j| {
                let start = j * hop;
                (prefix[start + block] - prefix[start]).max(0.0) / block as f64
            })
            .collect();
        Ok(BlockPowers {
            blocks,
            whole: acc / y.len() as f64,
        })
    }

    /// Integrated loudness of the signal scaled by `gain` (linear).
    pub(crate) fn integrated(&self, gain: f64) -> Result<LoudnessReading, DynamicsError> {
        let g2 = gain * gain;
        let lufs_of = |p: f64| LOUDNESS_OFFSET + 10.0 * p.log10();

        let above_abs: Vec<f64> = self
            .blocks
            .iter()
            .map(|p| p * g2)
            .filter(|&p| p > 0.0 && lufs_of(p) > ABSOLUTE_GATE_LUFS)
            .collect();
        if above_abs.is_empty() {
            let whole = self.whole * g2;
            if whole.is_nan() || whole <= 0.0 {
                return Err(DynamicsError::SilentAudio);
            }
            return Ok(LoudnessReading {
                lufs: lufs_of(whole),
                gated_blocks: 0,
                ungated_fallback: true,
            });
        }
        let mean_abs = above_abs.iter().sum::<f64>() / above_abs.len() as f64;
        let relative_gate = lufs_of(mean_abs) + RELATIVE_GATE_LU;
        let (sum, n) = above_abs
            .iter()
            .filter(|&&p| lufs_of(p) > relative_gate)
            .fold((0.0, 0usize), |(s, n), &p| (s + p, n + 1));
        Ok(LoudnessReading {
            lufs: lufs_of(sum / n as f64),
            gated_blocks: n,
            ungated_fallback: false,
        })
    }

    /// Linear gain that brings the integrated loudness to `target_lufs`.
    pub(crate) fn gain_for(&self, target_lufs: f64) -> Result<f64, DynamicsError> {
        let mut gain = 1.0;
        // Gate membership can change with level; a few fixed-point steps settle it.
        for _ in 0..8 {
            let reading = self.integrated(gain)?;
            let error_db = target_lufs - reading.lufs;
            if error_db.abs() < 1e-9 {
                break;
            }
            gain *= 10f64.powf(error_db / 20.0);
        }
        Ok(gain)
    }
}

/// Integrated loudness of a mono buffer.
pub fn integrated_loudness(buf: &AudioBuffer) -> Result<LoudnessReading, DynamicsError> {
    let reading = BlockPowers::measure(buf)?.integrated(1.0)?;
    if reading.ungated_fallback {
        log::warn!(
            "no block above the absolute gate; using ungated loudness {:.2} LUFS",
            reading.lufs
        );
    }
    Ok(reading)
}

/// Scales `buf` so its integrated loudness equals `target_lufs`.
/// Returns the scaled buffer and the applied gain in dB.
pub fn loudness_normalize(
    buf: &AudioBuffer,
    target_lufs: f64,
) -> Result<(AudioBuffer, f64), DynamicsError> {
    let powers = BlockPowers::measure(buf)?;
    let gain = powers.gain_for(target_lufs)?;
    let scaled = buf
        .samples()
        .iter()
        .map(|&s| (s as f64 * gain) as f32)
        .collect();
    Ok((buf.with_samples(scaled), 20.0 * gain.log10()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, amp: f64, seconds: f64, rate: u32) -> AudioBuffer {
        let n = (seconds * rate as f64) as usize;
        let s = (0..n)
            .map(|i| (amp * (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin()) as f32)
            .collect();
        AudioBuffer::new(s, rate).unwrap()
    }

    // Values below were produced once by an independent BS.1770 meter
    // (pyloudnorm 0.1, whose K-weighting is derived from the analog
    // prototypes rather than the tabulated 48 kHz coefficients, hence the
    // 0.05 LU allowance).
    const REF_997HZ_FULL_SCALE: f64 = -3.051_696_092_726_299_7;
    const REF_GATED_TWO_PART: f64 = -9.888_497_030_671_592;
    const REF_TWO_TONE: f64 = -11.435_031_379_104_887;

    #[test]
    fn full_scale_997hz_sine_conformance() {
        let r = integrated_loudness(&tone(997.0, 1.0, 10.0, 48_000)).unwrap();
        assert!((r.lufs - -3.01).abs() <= 0.1, "{}", r.lufs);
        assert!((r.lufs - REF_997HZ_FULL_SCALE).abs() <= 0.05);
        assert!(!r.ungated_fallback);
        assert_eq!(r.gated_blocks, 97);
    }

    #[test]
    fn other_rates_use_derived_coefficients() {
        let r = integrated_loudness(&tone(997.0, 1.0, 10.0, 44_100)).unwrap();
        assert!((r.lufs - -3.01).abs() <= 0.1, "{}", r.lufs);
    }

    #[test]
    fn relative_gate_drops_the_quiet_half() {
        let rate = 48_000;
        let n = 10 * rate as usize;
        let s: Vec<f32> = (0..n)
            .map(|i| {
                let t = i as f64 / rate as f64;
                let v = if t < 5.0 {
                    0.5 * (2.0 * std::f64::consts::PI * 440.0 * t).sin()
                } else {
                    0.01 * (2.0 * std::f64::consts::PI * 2000.0 * t).sin()
                };
                v as f32
            })
            .collect();
        let r = integrated_loudness(&AudioBuffer::new(s, rate).unwrap()).unwrap();
        assert!((r.lufs - REF_GATED_TWO_PART).abs() <= 0.05, "{}", r.lufs);
    }

    #[test]
    fn two_tone_matches_reference() {
        let rate = 48_000;
        let s: Vec<f32> = (0..10 * rate as usize)
            .map(|i| {
                let t = i as f64 / rate as f64;
                (0.3 * (2.0 * std::f64::consts::PI * 100.0 * t).sin()
                    + 0.2 * (2.0 * std::f64::consts::PI * 5000.0 * t).sin()) as f32
            })
            .collect();
        let r = integrated_loudness(&AudioBuffer::new(s, rate).unwrap()).unwrap();
        assert!((r.lufs - REF_TWO_TONE).abs() <= 0.05, "{}", r.lufs);
    }

    #[test]
    fn halving_amplitude_drops_six_db() {
        let a = integrated_loudness(&tone(440.0, 0.8, 3.0, 48_000)).unwrap();
        let b = integrated_loudness(&tone(440.0, 0.4, 3.0, 48_000)).unwrap();
        assert!((a.lufs - b.lufs - 6.0206).abs() <= 0.05);
    }

    #[test]
    fn silence_and_short_input() {
        assert!(matches!(
            integrated_loudness(&AudioBuffer::silence(48_000, 48_000)),
            Err(DynamicsError::SilentAudio)
        ));
        assert!(matches!(
            integrated_loudness(&tone(440.0, 0.5, 0.3, 48_000)),
            Err(DynamicsError::TooShort { .. })
        ));
    }

    #[test]
    fn sparse_signal_falls_back_to_ungated() {
        let mut s = vec![0.0f32; 48_000 * 5];
        s[1000] = 0.001;
        let r = integrated_loudness(&AudioBuffer::new(s, 48_000).unwrap()).unwrap();
        assert!(r.ungated_fallback);
        assert_eq!(r.gated_blocks, 0);
        assert!(r.lufs < -70.0);
    }

    #[test]
    fn normalization_hits_target() {
        let sine = tone(997.0, 1.0, 10.0, 48_000);
        let (out, gain_db) = loudness_normalize(&sine, -20.0).unwrap();
        let measured = integrated_loudness(&out).unwrap().lufs;
        assert!((measured - -20.0).abs() <= 0.1);
        assert!((gain_db - -16.99).abs() <= 0.1, "{gain_db}");

        let (again, gain_db) = loudness_normalize(&out, -20.0).unwrap();
        assert!(gain_db.abs() <= 0.1);
        assert!((integrated_loudness(&again).unwrap().lufs - -20.0).abs() <= 0.1);
        assert!(matches!(
            loudness_normalize(&AudioBuffer::silence(48_000, 48_000), -20.0),
            Err(DynamicsError::SilentAudio)
        ));
    }
}
