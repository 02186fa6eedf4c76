//! Synthetic multitrack corpus.
//!
//! Each song is in a random major key and tempo and loops a four-chord
//! progression. The context is a sine-harmonic chord pad plus a hi-hat
//! track over a faint noise floor. The stem is one of a bass line on the
//! chord roots, an arpeggiated lead on the chord tones, or a kick, snare and
//! click pattern.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::manifest::{Corpus, PairManifest, Song, SongEntry, MANIFEST_VERSION};
use super::PipelineError;
use crate::audio::{write_wav, AudioBuffer, WavFormat, CANONICAL_RATE};
use crate::seed::{self, Stage};

const RATE: f64 = CANONICAL_RATE as f64;
const MAJOR: [i32; 7] = [0, 2, 4, 5, 7, 9, 11];
const PROGRESSIONS: [[usize; 4]; 5] = [[0, 4, 5, 3], [0, 5, 3, 4], [0, 3, 4, 4], [5, 3, 0, 4], [0, 3, 5, 4]];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthOptions {
    pub songs: usize,
    pub duration_s: f64,
    pub seed: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            songs: 24,
            duration_s: 20.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StemKind {
    Bass,
    Lead,
    Drums,
}

impl StemKind {
    fn name(self) -> &'static str {
        match self {
            StemKind::Bass => "bass",
            StemKind::Lead => "lead",
            StemKind::Drums => "drums",
        }
    }
}

/// The separate tracks of one generated song.
#[derive(Debug, Clone)]
pub struct SynthSong {
    pub id: String,
    pub kind: StemKind,
    pub pad: Vec<f32>,
    pub hats: Vec<f32>,
    pub stem: Vec<f32>,
}

fn midi_hz(m: f64) -> f64 {
    440.0 * 2f64.powf((m - 69.0) / 12.0)
}

/// Semitone offsets from the tonic of the triad on scale degree `d`.
fn triad(d: usize) -> [i32; 3] {
    [0, 2, 4].map(|k| {
        let i = d + k;
        MAJOR[i % 7] + 12 * (i / 7) as i32
    })
}

/// Adds a decaying harmonic tone starting at `start` seconds.
fn add_note(
    out: &mut [f32],
    start: f64,
    length: f64,
    hz: f64,
    amp: f64,
    harmonics: &[f64],
    attack: f64,
    decay: f64,
) {
    let n0 = (start * RATE) as usize;
    let n1 = (((start + length) * RATE) as usize).min(out.len());
    let release = 0.02;
    for n in n0..n1 {
        let t = (n - n0) as f64 / RATE;
        let env = (t / attack).min(1.0) * (-t / decay).exp() * ((length - t) / release).clamp(0.0, 1.0);
        let mut v = 0.0;
        for (h, &a) in harmonics.iter().enumerate() {
            let f = hz * (h + 1) as f64;
            if f < RATE / 2.0 {
                v += a * (2.0 * PI * f * t).sin();
            }
        }
        out[n] += (amp * env * v) as f32;
    }
}

fn add_burst(out: &mut [f32], start: f64, amp: f64, decay: f64, rng: &mut ChaCha8Rng) {
    let n0 = (start * RATE) as usize;
    let len = ((decay * 6.0) * RATE) as usize;
    let mut prev = 0.0;
    for n in n0..(n0 + len).min(out.len()) {
        let t = (n - n0) as f64 / RATE;
        let x: f64 = rng.sample(StandardNormal);
        out[n] += (amp * (-t / decay).exp() * (x - prev) * 0.5) as f32;
        prev = x;
    }
}

fn add_kick(out: &mut [f32], start: f64, amp: f64) {
    let n0 = (start * RATE) as usize;
    let mut phase = 0.0;
    for n in n0..(n0 + (0.4 * RATE) as usize).min(out.len()) {
        let t = (n - n0) as f64 / RATE;
        let f = 50.0 + 70.0 * (-t / 0.03).exp();
        phase += 2.0 * PI * f / RATE;
        out[n] += (amp * (-t / 0.12).exp() * phase.sin()) as f32;
    }
}

fn normalize_peak(track: &mut [f32], target: f32) {
    let peak = track.iter().fold(0.0f32, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let g = target / peak;
        track.iter_mut().for_each(|v| *v *= g);
    }
}

/// Generates song `index` of the corpus described by `opts`.
pub fn synth_song(opts: &SynthOptions, index: usize) -> SynthSong {
    let mut rng = seed::rng(opts.seed, Stage::Corpus, index as u64);
    let len = (opts.duration_s * RATE).round() as usize;
    let tonic = 45 + rng.random_range(0..12);
    let bpm: f64 = rng.random_range(84.0..144.0);
    let beat = 60.0 / bpm;
    let bar = 4.0 * beat;
    let progression = PROGRESSIONS[rng.random_range(0..PROGRESSIONS.len())];
    let kind = [StemKind::Bass, StemKind::Lead, StemKind::Drums][index % 3];
    let rolloff: f64 = rng.random_range(0.45..0.7);
    let pad_harmonics: Vec<f64> = (0..6).map(|h| rolloff.powi(h)).collect();

    let mut pad = vec![0.0f32; len];
    let mut hats = vec![0.0f32; len];
    let mut stem = vec![0.0f32; len];
    let bars = (opts.duration_s / bar).ceil() as usize;
    for b in 0..bars {
        let chord = triad(progression[b % 4]);
        let t0 = b as f64 * bar;
        for &s in &chord {
            let hz = midi_hz((tonic + 24 + s) as f64);
            add_note(&mut pad, t0, bar, hz, 0.08, &pad_harmonics, 0.05, 4.0);
        }
        for k in 0..8 {
            let accent = if k % 2 == 0 { 1.0 } else { 0.6 };
            add_burst(&mut hats, t0 + k as f64 * beat / 2.0, 0.12 * accent, 0.02, &mut rng);
        }
        match kind {
            StemKind::Bass => {
                for k in 0..4 {
                    let s = if k % 2 == 0 { chord[0] } else { chord[2] };
                    let hz = midi_hz((tonic + s) as f64);
                    add_note(&mut stem, t0 + k as f64 * beat, beat, hz, 0.35, &[1.0, 0.6, 0.35, 0.2, 0.1], 0.01, 0.5);
                }
            }
            StemKind::Lead => {
                for k in 0..8 {
                    let s = chord[[0, 1, 2, 1][k % 4]] + 12 * (k / 4) as i32;
                    let hz = midi_hz((tonic + 36 + s) as f64);
                    add_note(&mut stem, t0 + k as f64 * beat / 2.0, beat / 2.0, hz, 0.25, &[1.0, 0.3, 0.1], 0.005, 0.2);
                }
            }
            StemKind::Drums => {
                for k in 0..4 {
                    let t = t0 + k as f64 * beat;
                    if k % 2 == 0 {
                        add_kick(&mut stem, t, 0.6);
                    } else {
                        add_burst(&mut stem, t, 0.5, 0.06, &mut rng);
                        add_note(&mut stem, t, 0.15, 185.0, 0.2, &[1.0], 0.001, 0.05);
                    }
                    add_note(&mut stem, t, 0.01, 2000.0, 0.15, &[1.0], 0.0005, 0.003);
                }
            }
        }
    }
    for v in hats.iter_mut() {
        *v += 0.003 * rng.sample::<f64, _>(StandardNormal) as f32;
    }
    for track in [&mut pad, &mut hats, &mut stem] {
        normalize_peak(track, 0.5);
    }
    SynthSong {
        id: format!("song{index:03}-{}", kind.name()),
        kind,
        pad,
        hats,
        stem,
    }
}

/// All songs of the corpus, context tracks summed.
pub fn synth_corpus(opts: &SynthOptions) -> Corpus {
    use rayon::prelude::*;
    let songs = (0..opts.songs)
        .into_par_iter()
        .map(|i| {
            let s = synth_song(opts, i);
            let context = s.pad.iter().zip(&s.hats).map(|(a, b)| a + b).collect();
            Song {
                id: s.id,
                context: AudioBuffer::from_trusted(context, CANONICAL_RATE),
                stem: AudioBuffer::from_trusted(s.stem, CANONICAL_RATE),
            }
        })
        .collect();
    Corpus::from_songs(songs)
}

/// Writes the corpus as 32-bit float WAV files plus `manifest.json` under
/// `dir` and returns the manifest path.
pub fn write_corpus(dir: &Path, opts: &SynthOptions) -> Result<PathBuf, PipelineError> {
    use rayon::prelude::*;
    let io = |p: &Path, source| PipelineError::Io {
        path: p.display().to_string(),
        source,
    };
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let songs = (0..opts.songs)
        .into_par_iter()
        .map(|i| {
            let s = synth_song(opts, i);
            let sub = dir.join(&s.id);
            fs::create_dir_all(&sub).map_err(|e| io(&sub, e))?;
            for (name, data) in [("pad.wav", s.pad), ("hats.wav", s.hats), ("stem.wav", s.stem)] {
                let buf = AudioBuffer::from_trusted(data, CANONICAL_RATE);
                write_wav(&buf, sub.join(name), WavFormat::Float32)?;
            }
            let rel = PathBuf::from(&s.id);
            Ok(SongEntry {
                id: s.id,
                context: vec![rel.join("pad.wav"), rel.join("hats.wav")],
                stem: rel.join("stem.wav"),
            })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let manifest = PairManifest {
        version: MANIFEST_VERSION,
        sample_rate: CANONICAL_RATE,
        songs,
        base_dir: dir.to_path_buf(),
    };
    let path = dir.join("manifest.json");
    manifest.save(&path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triads_follow_the_major_scale() {
        assert_eq!(triad(0), [0, 4, 7]);
        assert_eq!(triad(5), [9, 12, 16]);
        assert_eq!(triad(4), [7, 11, 14]);
    }

    #[test]
    fn deterministic_and_bounded() {
        let opts = SynthOptions {
            songs: 3,
            duration_s: 6.0,
            seed: 9,
        };
        let a = synth_song(&opts, 2);
        let b = synth_song(&opts, 2);
        assert_eq!(a.stem, b.stem);
        assert_eq!(a.hats, b.hats);
        assert_eq!(a.kind, StemKind::Drums);
        for track in [&a.pad, &a.hats, &a.stem] {
            assert_eq!(track.len(), 288_000);
            assert!(track.iter().all(|v| v.is_finite() && v.abs() < 1.0));
            assert!(track.iter().any(|&v| v != 0.0));
        }
        assert_ne!(synth_song(&opts, 1).pad, a.pad);
    }

    #[test]
    fn written_corpus_loads_identically() {
        let dir = tempfile::tempdir().unwrap();
        let opts = SynthOptions {
            songs: 2,
            duration_s: 3.0,
            seed: 1,
        };
        let path = write_corpus(dir.path(), &opts).unwrap();
        let loaded = Corpus::load(&PairManifest::load(&path).unwrap()).unwrap();
        let direct = synth_corpus(&opts);
        assert_eq!(loaded.songs(), direct.songs());
        assert_eq!(loaded.fingerprint(), direct.fingerprint());
    }
}
