//! Band-limited resampling by windowed-sinc interpolation.
//!
//! The kernel spans 32 zero crossings on each side of the interpolation
//! point (64 taps at unity ratio, proportionally more when downsampling,
//! where the cutoff follows the output Nyquist). It is tabulated at 512
//! phases per input sample and linearly interpolated between phases.

use super::AudioBuffer;

/// Zero crossings on each side of the kernel centre.
const HALF_ZERO_CROSSINGS: usize = 32;
/// Tabulated kernel phases per input sample.
const PHASES: usize = 512;
/// Passband edge as a fraction of the (lower) Nyquist frequency.
const ROLLOFF: f64 = 0.94;
const KAISER_BETA: f64 = 8.6;
const LANES: usize = 8;

/// How samples beyond either end of the input are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Zero,
    Circular,
}

/// Resamples a buffer to `target_rate`. Unit ratio returns an exact copy.
pub fn resample(buf: &AudioBuffer, target_rate: u32) -> AudioBuffer {
    assert!(target_rate > 0, "target rate must be positive");
    if target_rate == buf.sample_rate() {
        return buf.clone();
    }
    let ratio = target_rate as f64 / buf.sample_rate() as f64;
    let out_len = (buf.len() as f64 * ratio).round() as usize;
    let out = Resampler::new(ratio).run(buf.samples(), out_len, Boundary::Zero);
    AudioBuffer::from_trusted(out, target_rate)
}

/// Resamples raw samples by `ratio` (output rate over input rate), producing
/// `round(len * ratio)` samples.
pub fn resample_by_ratio(samples: &[f32], ratio: f64, boundary: Boundary) -> Vec<f32> {
    assert!(ratio.is_finite() && ratio > 0.0, "ratio must be positive");
    let out_len = (samples.len() as f64 * ratio).round() as usize;
    if ratio == 1.0 {
        return samples.to_vec();
    }
    Resampler::new(ratio).run(samples, out_len, boundary)
}

struct Resampler {
    ratio: f64,
    /// Taps left of the interpolation point, including the one at or before it.
    half: usize,
    /// Taps per phase, padded to a multiple of `LANES`.
    taps: usize,
    /// `PHASES + 1` rows of `taps` coefficients. Row `p` holds the kernel
    /// for a fractional position of `p / PHASES`, tap `j` sitting at input
    /// offset `j + 1 - half` from the integer part.
    bank: Vec<f32>,
}

impl Resampler {
    fn new(ratio: f64) -> Self {
        let scale = ratio.min(1.0);
        let zc = HALF_ZERO_CROSSINGS as f64;
        let reach = zc / scale;
        let half = reach.ceil() as usize + 1;
        let taps = (2 * half).div_ceil(LANES) * LANES;
        let norm = bessel_i0(KAISER_BETA);
        let gain = scale * ROLLOFF;
        let mut bank = Vec::with_capacity((PHASES + 1) * taps);
        for p in 0..=PHASES {
            let frac = p as f64 / PHASES as f64;
            for j in 0..taps {
                let d = frac + half as f64 - 1.0 - j as f64;
                let u = (d * scale).abs();
                let v = if u >= zc {
                    0.0
                } else {
                    let r = u / zc;
                    gain * sinc(ROLLOFF * u) * bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / norm
                };
                bank.push(v as f32);
            }
        }
        Resampler {
            ratio,
            half,
            taps,
            bank,
        }
    }

    fn run(&self, input: &[f32], out_len: usize, boundary: Boundary) -> Vec<f32> {
        let len = input.len() as i64;
        if len == 0 {
            return vec![0.0; out_len];
        }
        let taps = self.taps;
        let mut edge = vec![0.0f32; taps];
        (0..out_len)
            .map(|n| {
                let t = n as f64 / self.ratio;
                let base = t.floor();
                let pf = (t - base) * PHASES as f64;
                let p = (pf as usize).min(PHASES - 1);
                let w = (pf - p as f64) as f32;
                let b0 = &self.bank[p * taps..(p + 1) * taps];
                let b1 = &self.bank[(p + 1) * taps..(p + 2) * taps];
                let start = base as i64 + 1 - self.half as i64;
                let x: &[f32] = if start >= 0 && start + taps as i64 <= len {
                    &input[start as usize..start as usize + taps]
                } else {
                    for (j, e) in edge.iter_mut().enumerate() {
                        let k = start + j as i64;
                        *e = match boundary {
                            Boundary::Zero if k < 0 || k >= len => 0.0,
                            Boundary::Zero => input[k as usize],
                            Boundary::Circular => input[k.rem_euclid(len) as usize],
                        };
                    }
                    &edge
                };
                let mut lanes = [0.0f32; LANES];
                for ((xs, c0), c1) in x
                    .chunks_exact(LANES)
                    .zip(b0.chunks_exact(LANES))
                    .zip(b1.chunks_exact(LANES))
                {
                    for l in 0..LANES {
                        lanes[l] += xs[l] * (c0[l] + w * (c1[l] - c0[l]));
                    }
                }
                lanes.iter().map(|&v| v as f64).sum::<f64>() as f32
            })
            .collect()
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}
