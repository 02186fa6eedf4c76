//! Deterministic log-mel summary embedder.
//!
//! Hann-windowed 2048-point STFT with a 512-sample hop, 64 triangular mel
//! bands (HTK scale) spanning 0 Hz to Nyquist at 48 kHz, natural log of the
//! band power floored at 1e-10. The embedding is the per-band mean over
//! frames followed by the per-band standard deviation.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{EmbedError, Embedder, EmbedderSpec};
use crate::audio::{AudioBuffer, CANONICAL_RATE};

pub const BUILTIN_ID: &str = "builtin-logmel-128";
pub const MEL_BANDS: usize = 64;
pub const LOG_FLOOR: f64 = 1e-10;
const FRAME: usize = 2048;
const HOP: usize = 512;

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// One band's non-zero weights over FFT bins.
#[derive(Debug, Clone)]
struct Band {
    first_bin: usize,
    weights: Vec<f64>,
}

#[derive(Clone)]
pub struct LogMelEmbedder {
    spec: EmbedderSpec,
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    bands: Vec<Band>,
}

impl std::fmt::Debug for LogMelEmbedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LogMelEmbedder").field("spec", &self.spec).finish()
    }
}

impl Default for LogMelEmbedder {
    fn default() -> Self {
        Self::new()
    }
}

impl LogMelEmbedder {
    pub fn new() -> Self {
        let rate = CANONICAL_RATE as f64;
        let window = (0..FRAME)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / FRAME as f64).cos())
            .collect();
        let top = hz_to_mel(rate / 2.0);
        let edges: Vec<f64> = (0..MEL_BANDS + 2)
            .map(|i| mel_to_hz(top * i as f64 / (MEL_BANDS + 1) as f64))
            .collect();
        let bin_hz = rate / FRAME as f64;
        let bands = (0..MEL_BANDS)
            .map(|b| {
                let (lo, mid, hi) = (edges[b], edges[b + 1], edges[b + 2]);
                let weights: Vec<(usize, f64)> = (0..=FRAME / 2)
                    .filter_map(|k| {
                        let f = k as f64 * bin_hz;
                        let w = if f > lo && f <= mid {
                            (f - lo) / (mid - lo)
                        } else if f > mid && f < hi {
                            (hi - f) / (hi - mid)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((k, w))
                    })
                    .collect();
                let first_bin = weights.first().map_or(0, |w| w.0);
                Band {
                    first_bin,
                    weights: weights.into_iter().map(|w| w.1).collect(),
                }
            })
            .collect();
        LogMelEmbedder {
            spec: EmbedderSpec {
                id: BUILTIN_ID.to_string(),
                dim: 2 * MEL_BANDS,
                input_rate: CANONICAL_RATE,
            },
            fft: FftPlanner::new().plan_fft_forward(FRAME),
            window,
            bands,
        }
    }

    /// Log band energies per frame, `frames × MEL_BANDS`.
    fn log_mel_frames(&self, samples: &[f32]) -> Vec<[f64; MEL_BANDS]> {
        let frames = (samples.len() - FRAME) / HOP + 1;
        let mut buf = vec![Complex::new(0.0, 0.0); FRAME];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut power = vec![0.0f64; FRAME / 2 + 1];
        (0..frames)
            .map(|f| {
                let frame = &samples[f * HOP..f * HOP + FRAME];
                for ((c, &x), w) in buf.iter_mut().zip(frame).zip(&self.window) {
                    *c = Complex::new(x as f64 * w, 0.0);
                }
                self.fft.process_with_scratch(&mut buf, &mut scratch);
                for (p, c) in power.iter_mut().zip(&buf) {
                    *p = c.norm_sqr();
                }
                let mut out = [0.0; MEL_BANDS];
                for (o, band) in out.iter_mut().zip(&self.bands) {
                    let e: f64 = band
                        .weights
                        .iter()
                        .zip(&power[band.first_bin..])
                        .map(|(w, p)| w * p)
                        .sum();
                    *o = e.max(LOG_FLOOR).ln();
                }
                out
            })
            .collect()
    }

    pub fn embed(&self, buf: &AudioBuffer) -> Result<Vec<f32>, EmbedError> {
        if buf.sample_rate() != self.spec.input_rate {
            return Err(EmbedError::RateMismatch {
                expected: self.spec.input_rate,
                actual: buf.sample_rate(),
            });
        }
        if buf.len() < FRAME {
            return Err(EmbedError::TooShort {
                samples: buf.len(),
                frame: FRAME,
            });
        }
        let frames = self.log_mel_frames(buf.samples());
        let n = frames.len() as f64;
        let mut mean = vec![0.0f32; MEL_BANDS];
        let mut std = vec![0.0f32; MEL_BANDS];
        for b in 0..MEL_BANDS {
            // Shifted by the first frame so constant bands give exactly zero spread.
            let pivot = frames[0][b];
            let (s, s2) = frames.iter().fold((0.0, 0.0), |(s, s2), fr| {
                let d = fr[b] - pivot;
                (s + d, s2 + d * d)
            });
            let m = s / n;
            mean[b] = (pivot + m) as f32;
            std[b] = (s2 / n - m * m).max(0.0).sqrt() as f32;
        }
        mean.extend(std);
        Ok(mean)
    }
}

impl Embedder for LogMelEmbedder {
    fn spec(&self) -> &EmbedderSpec {
        &self.spec
    }

    fn embed_batch(&mut self, windows: &[AudioBuffer]) -> Result<Vec<Vec<f32>>, EmbedError> {
        let this = &*self;
        windows.par_iter().map(|w| this.embed(w)).collect()
    }
}

/// The built-in embedding of one 48 kHz buffer.
pub fn builtin_logmel_embed(buf: &AudioBuffer) -> Result<Vec<f32>, EmbedError> {
    LogMelEmbedder::new().embed(buf)
}
