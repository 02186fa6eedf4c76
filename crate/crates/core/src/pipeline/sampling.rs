use rand::Rng;
use rayon::prelude::*;

use super::manifest::Corpus;
use super::PipelineError;
use crate::audio::{seconds_to_samples, AudioBuffer, Window, WindowPair, CANONICAL_RATE};
use crate::perturb::cross_group_derangement;
use crate::seed::{self, Stage};

/// Redraws allowed per window before giving up on finding audible audio.
const MAX_DRAWS: usize = 64;

/// A window position that has not been cut out of the song yet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowRef {
    pub context_song: usize,
    pub stem_song: usize,
    /// Start of the window in samples, shared by context and stem.
    pub context_offset: usize,
    pub stem_offset: usize,
    pub len: usize,
}

impl WindowRef {
    pub fn matched(&self) -> bool {
        self.context_song == self.stem_song && self.context_offset == self.stem_offset
    }
}

fn audible(samples: &[f32]) -> bool {
    samples.iter().any(|&v| v != 0.0)
}

/// Draws `n` matched window positions. Songs are chosen uniformly among
/// those at least `duration_s` long and offsets uniformly within them.
/// Positions where the context or the stem is digitally silent are redrawn.
pub fn sample_refs(
    corpus: &Corpus,
    n: usize,
    duration_s: f64,
    seed: u64,
    stage: Stage,
) -> Result<Vec<WindowRef>, PipelineError> {
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(PipelineError::InvalidConfig(format!("window duration {duration_s}s")));
    }
    let len = seconds_to_samples(duration_s, CANONICAL_RATE);
    let songs = corpus.songs();
    let eligible: Vec<usize> = (0..songs.len()).filter(|&i| songs[i].len() >= len).collect();
    for s in songs.iter().filter(|s| s.len() < len) {
        log::warn!("song {:?} is shorter than {duration_s}s and is skipped", s.id);
    }
    if eligible.is_empty() {
        return Err(PipelineError::SongTooShort { duration_s });
    }
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::rng(seed, stage, i as u64);
            for _ in 0..MAX_DRAWS {
                let song = eligible[rng.random_range(0..eligible.len())];
                let offset = rng.random_range(0..=songs[song].len() - len);
                let s = &songs[song];
                if audible(&s.context.samples()[offset..offset + len])
                    && audible(&s.stem.samples()[offset..offset + len])
                {
                    return Ok(WindowRef {
                        context_song: song,
                        stem_song: song,
                        context_offset: offset,
                        stem_offset: offset,
                        len,
                    });
                }
            }
            Err(PipelineError::SilentCorpus)
        })
        .collect()
}

/// Gives every window the stem of a window from another song.
pub fn mismatch_refs(corpus: &Corpus, refs: &[WindowRef], seed: u64) -> Result<Vec<WindowRef>, PipelineError> {
    let groups: Vec<&str> = refs
        .iter()
        .map(|r| corpus.songs()[r.context_song].id.as_str())
        .collect();
    let perm = cross_group_derangement(&groups, seed)?;
    Ok(refs
        .iter()
        .zip(&perm)
        .map(|(r, &j)| WindowRef {
            stem_song: refs[j].stem_song,
            stem_offset: refs[j].stem_offset,
            ..*r
        })
        .collect())
}

fn cut(corpus: &Corpus, song: usize, offset: usize, len: usize, stem: bool) -> Window {
    let s = &corpus.songs()[song];
    let source = if stem { &s.stem } else { &s.context };
    let rate = source.sample_rate();
    Window {
        buffer: AudioBuffer::from_trusted(source.samples()[offset..offset + len].to_vec(), rate),
        source_song_id: s.id.clone(),
        source_offset_s: offset as f64 / rate as f64,
        duration_s: len as f64 / rate as f64,
    }
}

pub fn materialize(corpus: &Corpus, r: &WindowRef) -> WindowPair {
    WindowPair {
        context: cut(corpus, r.context_song, r.context_offset, r.len, false),
        stem: cut(corpus, r.stem_song, r.stem_offset, r.len, true),
        matched: r.matched(),
    }
}

/// Samples `n` matched context/stem windows of `duration_s` seconds.
pub fn sample_window_pairs(
    corpus: &Corpus,
    n: usize,
    duration_s: f64,
    seed: u64,
) -> Result<Vec<WindowPair>, PipelineError> {
    let refs = sample_refs(corpus, n, duration_s, seed, Stage::ReferenceSampling)?;
    Ok(refs.par_iter().map(|r| materialize(corpus, r)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::manifest::Song;
    use crate::stats::mismatch_pairs;

    fn song(id: &str, seconds: f64, freq: f64) -> Song {
        let n = (seconds * 48_000.0) as usize;
        let wave = |f: f64| {
            (0..n)
                .map(|i| (0.3 * (2.0 * std::f64::consts::PI * f * i as f64 / 48_000.0).sin()) as f32)
                .collect::<Vec<_>>()
        };
        Song {
            id: id.into(),
            context: AudioBuffer::new(wave(freq), 48_000).unwrap(),
            stem: AudioBuffer::new(wave(freq * 1.5), 48_000).unwrap(),
        }
    }

    fn corpus() -> Corpus {
        Corpus::from_songs(vec![song("a", 6.0, 220.0), song("b", 7.0, 330.0), song("c", 4.0, 440.0)])
    }

    #[test]
    fn deterministic_and_in_bounds() {
        let c = corpus();
        let a = sample_refs(&c, 50, 5.0, 3, Stage::ReferenceSampling).unwrap();
        let b = sample_refs(&c, 50, 5.0, 3, Stage::ReferenceSampling).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_refs(&c, 50, 5.0, 3, Stage::CandidateSampling).unwrap());
        for r in &a {
            assert_ne!(r.context_song, 2, "4 s song must be skipped");
            assert!(r.context_offset + r.len <= c.songs()[r.context_song].len());
            assert!(r.matched());
        }
        let pairs = sample_window_pairs(&c, 3, 5.0, 11).unwrap();
        assert_eq!(pairs, sample_window_pairs(&c, 3, 5.0, 11).unwrap());
        assert_eq!(pairs[0].context.len(), 240_000);
    }

    #[test]
    fn prefix_is_stable_when_n_grows() {
        let c = corpus();
        let short = sample_refs(&c, 10, 5.0, 8, Stage::ReferenceSampling).unwrap();
        let long = sample_refs(&c, 40, 5.0, 8, Stage::ReferenceSampling).unwrap();
        assert_eq!(short[..], long[..10]);
    }

    #[test]
    fn all_songs_too_short() {
        let c = Corpus::from_songs(vec![song("a", 4.0, 220.0)]);
        assert!(matches!(
            sample_window_pairs(&c, 3, 5.0, 1),
            Err(PipelineError::SongTooShort { .. })
        ));
    }

    #[test]
    fn both_songs_appear() {
        let c = Corpus::from_songs(vec![song("a", 6.0, 220.0), song("b", 6.0, 330.0)]);
        let refs = sample_refs(&c, 1000, 5.0, 5, Stage::ReferenceSampling).unwrap();
        assert!(refs.iter().any(|r| r.context_song == 0));
        assert!(refs.iter().any(|r| r.context_song == 1));
    }

    #[test]
    fn silent_regions_are_redrawn() {
        let mut s = song("a", 12.0, 220.0);
        let mut stem = s.stem.samples().to_vec();
        stem[..6 * 48_000].iter_mut().for_each(|v| *v = 0.0);
        s.stem = AudioBuffer::new(stem, 48_000).unwrap();
        let c = Corpus::from_songs(vec![s]);
        for r in sample_refs(&c, 200, 5.0, 2, Stage::ReferenceSampling).unwrap() {
            assert!(r.stem_offset + r.len > 6 * 48_000);
        }
    }

    #[test]
    fn lazy_mismatch_matches_pair_mismatch() {
        let c = Corpus::from_songs(vec![song("a", 6.0, 220.0), song("b", 7.0, 330.0), song("c", 8.0, 440.0)]);
        let refs = sample_refs(&c, 30, 5.0, 4, Stage::ReferenceSampling).unwrap();
        let pairs: Vec<WindowPair> = refs.iter().map(|r| materialize(&c, r)).collect();
        let lazy: Vec<WindowPair> = mismatch_refs(&c, &refs, 77)
            .unwrap()
            .iter()
            .map(|r| materialize(&c, r))
            .collect();
        assert_eq!(lazy, mismatch_pairs(&pairs, 77).unwrap());
        assert!(lazy.iter().all(|p| p.context.source_song_id != p.stem.source_song_id));
    }

    #[test]
    fn single_song_cannot_be_mismatched() {
        let c = Corpus::from_songs(vec![song("a", 6.0, 220.0)]);
        let refs = sample_refs(&c, 10, 5.0, 4, Stage::ReferenceSampling).unwrap();
        assert!(matches!(
            mismatch_refs(&c, &refs, 1),
            Err(PipelineError::Perturb(crate::perturb::PerturbError::InfeasibleDerangement { .. }))
        ));
    }
}
