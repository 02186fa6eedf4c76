use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{AudioBuffer, AudioError};

/// Sample encodings the reader and writer support.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavFormat {
    Int16,
    Int24,
    Float32,
}

impl WavFormat {
    fn spec(self, sample_rate: u32) -> WavSpec {
        let (bits_per_sample, sample_format) = match self {
            WavFormat::Int16 => (16, SampleFormat::Int),
            WavFormat::Int24 => (24, SampleFormat::Int),
            WavFormat::Float32 => (32, SampleFormat::Float),
        };
        WavSpec {
            channels: 1,
            sample_rate,
            bits_per_sample,
            sample_format,
        }
    }
}

/// Reads a PCM WAV file and folds it to mono at its native rate.
pub fn load_audio(path: impl AsRef<Path>) -> Result<AudioBuffer, AudioError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| AudioError::io(path, e))?;
    decode_wav(&bytes).map_err(|e| match e {
        AudioError::UnsupportedFormat(m) => {
            AudioError::UnsupportedFormat(format!("{}: {m}", path.display()))
        }
        AudioError::CorruptFile(m) => AudioError::CorruptFile(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Decodes an in-memory WAV image.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioBuffer, AudioError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(AudioError::UnsupportedFormat("not a RIFF/WAVE stream".into()));
    }
    let reader = WavReader::new(Cursor::new(bytes)).map_err(map_hound)?;
    let spec = reader.spec();
    if !(1..=2).contains(&spec.channels) {
        return Err(AudioError::UnsupportedFormat(format!(
            "{} channels (only mono and stereo are supported)",
            spec.channels
        )));
    }
    if spec.sample_rate == 0 {
        return Err(AudioError::CorruptFile("sample rate of zero".into()));
    }
    let declared = reader.len() as usize;
    let interleaved = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => read_int(reader, 1.0 / 32_768.0)?,
        (SampleFormat::Int, 24) => read_int(reader, 1.0 / 8_388_608.0)?,
        (SampleFormat::Float, 32) => read_all(reader.into_samples::<f32>())?,
        (fmt, bits) => {
            return Err(AudioError::UnsupportedFormat(format!(
                "{bits}-bit {fmt:?} samples"
            )))
        }
    };
    if interleaved.len() != declared {
        return Err(AudioError::CorruptFile(format!(
            "expected {declared} samples, decoded {}",
            interleaved.len()
        )));
    }
    let channels = spec.channels as usize;
    if interleaved.len() % channels != 0 {
        return Err(AudioError::CorruptFile("partial trailing frame".into()));
    }
    let mono: Vec<f32> = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(2)
            .map(|lr| ((lr[0] as f64 + lr[1] as f64) * 0.5) as f32)
            .collect()
    };
    AudioBuffer::new(mono, spec.sample_rate).map_err(|e| AudioError::CorruptFile(e.to_string()))
}

fn read_int<R: Read>(reader: WavReader<R>, scale: f64) -> Result<Vec<f32>, AudioError> {
    let raw = read_all(reader.into_samples::<i32>())?;
    Ok(raw.into_iter().map(|s| (s as f64 * scale) as f32).collect())
}

fn read_all<T, I>(samples: I) -> Result<Vec<T>, AudioError>
where
    I: Iterator<Item = hound::Result<T>>,
{
    samples.collect::<Result<Vec<T>, _>>().map_err(map_hound)
}

fn map_hound(e: hound::Error) -> AudioError {
    match e {
        hound::Error::Unsupported => AudioError::UnsupportedFormat("unsupported WAV encoding".into()),
        hound::Error::IoError(io) => AudioError::CorruptFile(format!("truncated data ({io})")),
        other => AudioError::CorruptFile(other.to_string()),
    }
}

/// Encodes a mono WAV image.
pub fn encode_wav(buf: &AudioBuffer, format: WavFormat) -> Vec<u8> {
    let mut cursor = Cursor::new(Vec::with_capacity(44 + buf.len() * 4));
    {
        let mut writer = WavWriter::new(&mut cursor, format.spec(buf.sample_rate()))
            .expect("writing a WAV header to memory cannot fail");
        write_samples(&mut writer, buf.samples(), format)
            .expect("writing samples to memory cannot fail");
        writer.finalize().expect("finalizing an in-memory WAV cannot fail");
    }
    cursor.into_inner()
}

/// Writes a mono WAV file.
pub fn write_wav(
    buf: &AudioBuffer,
    path: impl AsRef<Path>,
    format: WavFormat,
) -> Result<(), AudioError> {
    let path = path.as_ref();
    fs::write(path, encode_wav(buf, format)).map_err(|e| AudioError::io(path, e))
}

fn write_samples<W>(
    writer: &mut WavWriter<W>,
    samples: &[f32],
    format: WavFormat,
) -> hound::Result<()>
where
    W: std::io::Write + std::io::Seek,
{
    match format {
        WavFormat::Float32 => {
            for &s in samples {
                writer.write_sample(s)?;
            }
        }
        WavFormat::Int16 => {
            for &s in samples {
                writer.write_sample(quantize(s, 32_768.0) as i16)?;
            }
        }
        WavFormat::Int24 => {
            for &s in samples {
                writer.write_sample(quantize(s, 8_388_608.0))?;
            }
        }
    }
    Ok(())
}

fn quantize(s: f32, full_scale: f64) -> i32 {
    (s as f64 * full_scale)
        .round()
        .clamp(-full_scale, full_scale - 1.0) as i32
}
