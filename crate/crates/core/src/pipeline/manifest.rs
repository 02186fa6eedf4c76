use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::audio::{AudioBuffer, CANONICAL_RATE};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SongEntry {
    pub id: String,
    /// Files summed at unity gain to form the context.
    pub context: Vec<PathBuf>,
    pub stem: PathBuf,
}

/// A list of songs, each a context and the stem that belongs with it.
/// Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairManifest {
    pub version: u32,
    pub sample_rate: u32,
    pub songs: Vec<SongEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl PairManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut m: PairManifest = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Manifest(format!("{}: {e}", path.display())))?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PipelineError> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("manifest is serializable");
        fs::write(path, text + "\n").map_err(|source| PipelineError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.version != MANIFEST_VERSION {
            return Err(PipelineError::Manifest(format!(
                "unsupported manifest version {}",
                self.version
            )));
        }
        if self.sample_rate == 0 {
            return Err(PipelineError::Manifest("sample_rate must be positive".into()));
        }
        if self.songs.is_empty() {
            return Err(PipelineError::Manifest("no songs".into()));
        }
        let mut ids = HashSet::new();
        for s in &self.songs {
            if !ids.insert(s.id.as_str()) {
                return Err(PipelineError::Manifest(format!("duplicate song id {:?}", s.id)));
            }
            if s.context.is_empty() {
                return Err(PipelineError::Manifest(format!("song {:?} has no context files", s.id)));
            }
            for p in s.context.iter().chain([&s.stem]) {
                let full = self.resolve(p);
                if !full.is_file() {
                    return Err(PipelineError::Manifest(format!(
                        "song {:?}: missing file {}",
                        s.id,
                        full.display()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One song's audio at the canonical rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Song {
    pub id: String,
    pub context: AudioBuffer,
    pub stem: AudioBuffer,
}

impl Song {
    pub fn len(&self) -> usize {
        self.context.len()
    }

    pub fn is_empty(&self) -> bool {
        self.context.is_empty()
    }
}

/// Decoded songs plus a content fingerprint.
#[derive(Debug, Clone)]
pub struct Corpus {
    songs: Vec<Song>,
    fingerprint: String,
}

impl Corpus {
    pub fn load(manifest: &PairManifest) -> Result<Self, PipelineError> {
        manifest.validate()?;
        let songs = manifest
            .songs
            .par_iter()
            .map(|entry| {
                let parts = entry
                    .context
                    .iter()
                    .map(|p| AudioBuffer::load_canonical(manifest.resolve(p)))
                    .collect::<Result<Vec<_>, _>>()?;
                let context = sum_truncating(&parts);
                let stem = AudioBuffer::load_canonical(manifest.resolve(&entry.stem))?;
                Ok(align(&entry.id, context, stem))
            })
            .collect::<Result<Vec<_>, PipelineError>>()?;
        Ok(Self::from_songs(songs))
    }

    /// Builds a corpus from songs already in memory. Context and stem are
    /// trimmed to a common length.
    pub fn from_songs(songs: Vec<Song>) -> Self {
        let songs: Vec<Song> = songs
            .into_iter()
            .map(|s| align(&s.id, s.context, s.stem))
            .collect();
        let digests: Vec<Vec<u8>> = songs
            .par_iter()
            .map(|s| {
                let mut h = Sha256::new();
                h.update(s.id.as_bytes());
                h.update([0]);
                for buf in [&s.context, &s.stem] {
                    h.update(buf.sample_rate().to_le_bytes());
                    h.update((buf.len() as u64).to_le_bytes());
                    for v in buf.samples() {
                        h.update(v.to_le_bytes());
                    }
                }
                h.finalize().to_vec()
            })
            .collect();
        let mut h = Sha256::new();
        for d in digests {
            h.update(d);
        }
        Corpus {
            songs,
            fingerprint: hex::encode(h.finalize()),
        }
    }

    pub fn songs(&self) -> &[Song] {
        &self.songs
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }
}

fn sum_truncating(parts: &[AudioBuffer]) -> AudioBuffer {
    let len = parts.iter().map(AudioBuffer::len).min().unwrap_or(0);
    let mut out = vec![0.0f32; len];
    for p in parts {
        for (o, s) in out.iter_mut().zip(p.samples()) {
            *o += s;
        }
    }
    AudioBuffer::from_trusted(out, CANONICAL_RATE)
}

fn align(id: &str, context: AudioBuffer, stem: AudioBuffer) -> Song {
    let len = context.len().min(stem.len());
    if context.len() != stem.len() {
        log::warn!(
            "song {id:?}: context has {} samples and stem {}; using the first {len}",
            context.len(),
            stem.len()
        );
    }
    let trim = |b: AudioBuffer| {
        if b.len() == len {
            b
        } else {
            let rate = b.sample_rate();
            let mut s = b.into_samples();
            s.truncate(len);
            AudioBuffer::from_trusted(s, rate)
        }
    };
    Song {
        id: id.to_string(),
        context: trim(context),
        stem: trim(stem),
    }
}
