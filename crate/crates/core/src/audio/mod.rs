//! Mono PCM buffers, WAV decoding, resampling and fixed-length windows.
//!
//! Everything downstream (metering, mixing, embedding) operates on
//! [`AudioBuffer`], a single-channel `f32` buffer at a known sample rate.
//! Files are decoded to that canonical form on ingest; stereo is folded to
//! mono by taking the per-sample mean of the two channels.

mod resample;
mod wav;

use std::path::Path;

use thiserror::Error;

pub use resample::{resample, resample_by_ratio, Boundary};
pub use wav::{decode_wav, encode_wav, load_audio, write_wav, WavFormat};

/// Processing rate every buffer is brought to on ingest.
pub const CANONICAL_RATE: u32 = 48_000;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt file: {0}")]
    CorruptFile(String),
    #[error("window at {offset_s}s lasting {duration_s}s does not fit in {available_s}s of audio")]
    OutOfRange {
        offset_s: f64,
        duration_s: f64,
        available_s: f64,
    },
    #[error("invalid audio buffer: {0}")]
    InvalidBuffer(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl AudioError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        AudioError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Decoded single-channel audio.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioBuffer {
    /// Wraps samples, rejecting a zero rate and non-finite samples.
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidBuffer("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::InvalidBuffer(format!(
                "non-finite sample at index {i}"
            )));
        }
        Ok(AudioBuffer {
            samples,
            sample_rate,
        })
    }

    /// A buffer of `len` zeros.
    pub fn silence(len: usize, sample_rate: u32) -> Self {
        assert!(sample_rate > 0, "sample rate must be positive");
        AudioBuffer {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channels(&self) -> u16 {
        1
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Same rate, new samples. Callers must only pass finite values.
    pub(crate) fn with_samples(&self, samples: Vec<f32>) -> Self {
        debug_assert!(samples.iter().all(|s| s.is_finite()));
        AudioBuffer {
            samples,
            sample_rate: self.sample_rate,
        }
    }

    pub(crate) fn from_trusted(samples: Vec<f32>, sample_rate: u32) -> Self {
        debug_assert!(sample_rate > 0);
        debug_assert!(samples.iter().all(|s| s.is_finite()));
        AudioBuffer {
            samples,
            sample_rate,
        }
    }

    /// Sample-wise sum of buffers at unity gain. Shorter inputs are treated as
    /// zero-padded; all inputs must share one rate.
    pub fn sum<'a, I>(buffers: I) -> Result<AudioBuffer, AudioError>
    where
        I: IntoIterator<Item = &'a AudioBuffer>,
    {
        let mut iter = buffers.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| AudioError::InvalidBuffer("nothing to sum".into()))?;
        let mut acc = first.samples.clone();
        for b in iter {
            if b.sample_rate != first.sample_rate {
                return Err(AudioError::InvalidBuffer(format!(
                    "cannot sum buffers at {} Hz and {} Hz",
                    first.sample_rate, b.sample_rate
                )));
            }
            if b.samples.len() > acc.len() {
                acc.resize(b.samples.len(), 0.0);
            }
            for (a, &s) in acc.iter_mut().zip(&b.samples) {
                *a += s;
            }
        }
        Ok(AudioBuffer::from_trusted(acc, first.sample_rate))
    }

    /// Loads a file and resamples it to [`CANONICAL_RATE`].
    pub fn load_canonical(path: impl AsRef<Path>) -> Result<AudioBuffer, AudioError> {
        let buf = load_audio(path)?;
        Ok(resample(&buf, CANONICAL_RATE))
    }
}

/// A fixed-length excerpt of a song.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub buffer: AudioBuffer,
    pub source_song_id: String,
    pub source_offset_s: f64,
    pub duration_s: f64,
}

impl Window {
    pub fn from_song(mut self, song_id: impl Into<String>) -> Self {
        self.source_song_id = song_id.into();
        self
    }

    /// Replaces the audio while keeping provenance. The new buffer must have
    /// the same length and rate.
    pub(crate) fn with_buffer(&self, buffer: AudioBuffer) -> Window {
        debug_assert_eq!(buffer.len(), self.buffer.len());
        debug_assert_eq!(buffer.sample_rate(), self.buffer.sample_rate());
        Window {
            buffer,
            source_song_id: self.source_song_id.clone(),
            source_offset_s: self.source_offset_s,
            duration_s: self.duration_s,
        }
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn sample_rate(&self) -> u32 {
        self.buffer.sample_rate()
    }
}

/// A context window and the stem window mixed against it.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPair {
    pub context: Window,
    pub stem: Window,
    /// Both sides come from the same song at the same offset.
    pub matched: bool,
}

impl WindowPair {
    pub fn new(context: Window, stem: Window, matched: bool) -> Result<Self, AudioError> {
        if context.len() != stem.len() || context.sample_rate() != stem.sample_rate() {
            return Err(AudioError::InvalidBuffer(format!(
                "context ({} samples @ {} Hz) and stem ({} samples @ {} Hz) differ",
                context.len(),
                context.sample_rate(),
                stem.len(),
                stem.sample_rate()
            )));
        }
        Ok(WindowPair {
            context,
            stem,
            matched,
        })
    }
}

/// Number of samples covering `seconds` at `rate`.
pub fn seconds_to_samples(seconds: f64, rate: u32) -> usize {
    (seconds * rate as f64).round().max(0.0) as usize
}

/// Copies `duration_s` seconds starting at `offset_s` out of `buf`.
pub fn extract_window(
    buf: &AudioBuffer,
    offset_s: f64,
    duration_s: f64,
) -> Result<Window, AudioError> {
    let out_of_range = || AudioError::OutOfRange {
        offset_s,
        duration_s,
        available_s: buf.duration_s(),
    };
    if !(offset_s.is_finite() && duration_s.is_finite() && offset_s >= 0.0 && duration_s > 0.0) {
        return Err(out_of_range());
    }
    let rate = buf.sample_rate();
    let start = seconds_to_samples(offset_s, rate);
    let len = seconds_to_samples(duration_s, rate);
    let end = start.checked_add(len).ok_or_else(out_of_range)?;
    if len == 0 || end > buf.len() {
        return Err(out_of_range());
    }
    Ok(Window {
        buffer: AudioBuffer::from_trusted(buf.samples[start..end].to_vec(), rate),
        source_song_id: String::new(),
        source_offset_s: offset_s,
        duration_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(len: usize, rate: u32) -> AudioBuffer {
        AudioBuffer::new((0..len).map(|i| (i as f32 / len as f32) - 0.5).collect(), rate).unwrap()
    }

    #[test]
    fn rejects_bad_buffers() {
        assert!(AudioBuffer::new(vec![0.0], 0).is_err());
        assert!(AudioBuffer::new(vec![0.0, f32::NAN], 48_000).is_err());
        assert!(AudioBuffer::new(vec![f32::INFINITY], 48_000).is_err());
    }

    #[test]
    fn full_span_window_is_the_buffer() {
        let b = ramp(48_000, 48_000);
        let w = extract_window(&b, 0.0, 1.0).unwrap();
        assert_eq!(w.buffer, b);
    }

    #[test]
    fn window_index_arithmetic() {
        let b = ramp(480_000, 48_000);
        let w = extract_window(&b, 2.0, 5.0).unwrap();
        assert_eq!(w.len(), 240_000);
        assert_eq!(w.buffer.samples()[0], b.samples()[96_000]);
        assert_eq!(w.buffer.samples()[239_999], b.samples()[335_999]);
    }

    #[test]
    fn window_past_end_is_out_of_range() {
        let b = ramp(480_000, 48_000);
        assert!(matches!(
            extract_window(&b, 6.0, 5.0),
            Err(AudioError::OutOfRange { .. })
        ));
        assert!(extract_window(&b, -0.1, 1.0).is_err());
        assert!(extract_window(&b, 0.0, 0.0).is_err());
    }

    #[test]
    fn pair_requires_equal_shapes() {
        let b = ramp(1000, 1000);
        let a = extract_window(&b, 0.0, 0.5).unwrap();
        let c = extract_window(&b, 0.0, 0.4).unwrap();
        assert!(WindowPair::new(a.clone(), c, true).is_err());
        assert!(WindowPair::new(a.clone(), a, true).is_ok());
    }

    #[test]
    fn sum_pads_shorter_inputs() {
        let a = AudioBuffer::new(vec![1.0, 1.0, 1.0], 10).unwrap();
        let b = AudioBuffer::new(vec![0.5], 10).unwrap();
        let s = AudioBuffer::sum([&a, &b]).unwrap();
        assert_eq!(s.samples(), &[1.5, 1.0, 1.0]);
        let c = AudioBuffer::new(vec![0.5], 11).unwrap();
        assert!(AudioBuffer::sum([&a, &c]).is_err());
    }

    proptest! {
        #[test]
        fn windows_over_a_partition_rebuild_the_buffer(
            len in 10usize..2000,
            cuts in proptest::collection::vec(1usize..2000, 0..6),
        ) {
            let rate = 1000;
            let b = ramp(len, rate);
            let mut points: Vec<usize> = cuts.into_iter().filter(|&c| c < len).collect();
            points.push(0);
            points.push(len);
            points.sort_unstable();
            points.dedup();
            let mut rebuilt = Vec::with_capacity(len);
            for span in points.windows(2) {
                let w = extract_window(
                    &b,
                    span[0] as f64 / rate as f64,
                    (span[1] - span[0]) as f64 / rate as f64,
                ).unwrap();
                rebuilt.extend_from_slice(w.buffer.samples());
            }
            prop_assert_eq!(rebuilt.as_slice(), b.samples());
        }
    }
}
