use std::collections::HashMap;
use std::path::PathBuf;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::manifest::Corpus;
use super::sampling::{materialize, mismatch_refs, sample_refs, WindowRef};
use super::{PipelineError, RunConfig};
use crate::audio::{resample, AudioBuffer, WindowPair};
use crate::dynamics::{mix_parts, MixRegime};
use crate::embed::{
    embed_checked, read_cache, write_cache, BridgeClient, Embedder, EmbedderSpec, EmbeddingSet,
    LogMelEmbedder, BUILTIN_ID,
};
use crate::perturb::Transform;
use crate::seed::{self, Stage};
use crate::stats::{apa_score, fit_pca_matrix, ApaResult, GaussianStats, Projection};

const CHUNK: usize = 32;
const CACHE_FORMAT: u32 = 1;

/// Which embedder a run uses.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EmbedderChoice {
    Builtin,
    Bridge { command: String },
}

impl EmbedderChoice {
    pub(crate) fn key(&self) -> String {
        match self {
            EmbedderChoice::Builtin => BUILTIN_ID.to_string(),
            EmbedderChoice::Bridge { command } => format!("bridge:{command}"),
        }
    }

    fn instantiate(&self) -> Result<Box<dyn Embedder>, PipelineError> {
        Ok(match self {
            EmbedderChoice::Builtin => Box::new(LogMelEmbedder::new()),
            EmbedderChoice::Bridge { command } => Box::new(BridgeClient::spawn(command)?),
        })
    }
}

/// Where the candidate set comes from.
#[derive(Debug, Clone, Copy)]
pub enum Candidate<'a> {
    /// Windows sampled from a corpus with the candidate stream.
    Corpus(&'a Corpus),
    /// Pairs built by the caller, for example generated stems aligned to
    /// known contexts.
    Pairs(&'a [WindowPair]),
}

/// Window counts of the three sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetCounts {
    pub reference: usize,
    pub mismatched: usize,
    pub candidate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApaReport {
    pub fingerprint: String,
    pub config: RunConfig,
    pub embedder: EmbedderSpec,
    /// Dimension after projection.
    pub dim: usize,
    pub result: ApaResult,
    pub counts: SetCounts,
    pub warnings: Vec<String>,
    pub wall_clock_s: f64,
}

/// How a set of windows is produced, in enough detail to key a cache.
#[derive(Serialize)]
struct SetKey<'a> {
    format: u32,
    role: &'a str,
    corpus: &'a str,
    transform: Option<String>,
    regime: MixRegime,
    embedder: String,
    window_duration_s: f64,
    n_windows: usize,
    seed: u64,
}

fn sha_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Holds embedders and embedding sets across runs. Sets are kept in memory
/// and, with a cache directory, on disk keyed by a content fingerprint.
pub struct Engine {
    cache_dir: Option<PathBuf>,
    memo: HashMap<String, EmbeddingSet>,
    embedders: HashMap<String, Box<dyn Embedder>>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("cache_dir", &self.cache_dir)
            .field("sets", &self.memo.len())
            .finish()
    }
}

/// One run's mutable bookkeeping.
#[derive(Default)]
struct Notes {
    warnings: Vec<String>,
}

impl Engine {
    pub fn new(cache_dir: Option<PathBuf>) -> Self {
        Engine {
            cache_dir,
            memo: HashMap::new(),
            embedders: HashMap::new(),
        }
    }

    fn embedder(&mut self, choice: &EmbedderChoice) -> Result<&mut Box<dyn Embedder>, PipelineError> {
        let key = choice.key();
        if !self.embedders.contains_key(&key) {
            let e = choice.instantiate()?;
            self.embedders.insert(key.clone(), e);
        }
        Ok(self.embedders.get_mut(&key).expect("just inserted"))
    }

    /// Returns the set under `key`, computing it with `make` on a miss.
    fn cached(
        &mut self,
        key: Option<String>,
        cfg: &RunConfig,
        notes: &mut Notes,
        label: &str,
        n: usize,
        make: &(dyn Fn(usize) -> Result<WindowPair, PipelineError> + Sync),
    ) -> Result<EmbeddingSet, PipelineError> {
        if let Some(k) = &key {
            if let Some(set) = self.memo.get(k) {
                return Ok(set.clone());
            }
            if let Some(dir) = &self.cache_dir {
                let path = dir.join(format!("{k}.apae"));
                if path.is_file() {
                    match read_cache(&path) {
                        Ok(set) if set.source_fingerprint == *k && set.count() == n => {
                            log::debug!("loaded {label} embeddings from {}", path.display());
                            self.memo.insert(k.clone(), set.clone());
                            return Ok(set);
                        }
                        Ok(_) => log::warn!("{} does not match its key; recomputing", path.display()),
                        Err(e) => log::warn!("ignoring unreadable cache {}: {e}", path.display()),
                    }
                }
            }
        }
        let set = self.embed_windows(cfg, notes, label, n, key.as_deref().unwrap_or(""), make)?;
        if let Some(k) = key {
            if let Some(dir) = &self.cache_dir {
                if let Err(e) = write_cache(&set, dir.join(format!("{k}.apae"))) {
                    log::warn!("could not write embedding cache: {e}");
                }
            }
            self.memo.insert(k, set.clone());
        }
        Ok(set)
    }

    fn embed_windows(
        &mut self,
        cfg: &RunConfig,
        notes: &mut Notes,
        label: &str,
        n: usize,
        fingerprint: &str,
        make: &(dyn Fn(usize) -> Result<WindowPair, PipelineError> + Sync),
    ) -> Result<EmbeddingSet, PipelineError> {
        let regime = cfg.regime;
        let embedder = self.embedder(&cfg.embedder)?;
        let spec = embedder.spec().clone();
        let mut values = Vec::with_capacity(n * spec.dim);
        let mut ungated = 0usize;
        for start in (0..n).step_by(CHUNK) {
            let end = (start + CHUNK).min(n);
            let mixed: Vec<(AudioBuffer, bool)> = (start..end)
                .into_par_iter()
                .map(|i| {
                    let pair = make(i)?;
                    let parts = mix_parts(&pair, regime)?;
                    let out = if parts.output.sample_rate() == spec.input_rate {
                        parts.output
                    } else {
                        resample(&parts.output, spec.input_rate)
                    };
                    Ok((out, !parts.ungated.is_empty()))
                })
                .collect::<Result<_, PipelineError>>()?;
            ungated += mixed.iter().filter(|m| m.1).count();
            let buffers: Vec<AudioBuffer> = mixed.into_iter().map(|m| m.0).collect();
            for row in embed_checked(embedder.as_mut(), &buffers)? {
                values.extend(row);
            }
        }
        if ungated > 0 {
            notes.warnings.push(format!(
                "{label}: {ungated} of {n} windows had a part too quiet for the loudness gate"
            ));
        }
        Ok(EmbeddingSet::new(
            values,
            spec,
            regime.label(),
            cfg.window_duration_s,
            fingerprint,
        )?)
    }

    /// Embeddings of the matched reference set R and the mismatched set R′.
    pub fn reference_sets(
        &mut self,
        reference: &Corpus,
        cfg: &RunConfig,
    ) -> Result<(EmbeddingSet, EmbeddingSet), PipelineError> {
        let mut notes = Notes::default();
        self.reference_sets_noted(reference, cfg, &mut notes)
    }

    fn reference_sets_noted(
        &mut self,
        reference: &Corpus,
        cfg: &RunConfig,
        notes: &mut Notes,
    ) -> Result<(EmbeddingSet, EmbeddingSet), PipelineError> {
        cfg.validate()?;
        let n = cfg.n_windows;
        let refs = sample_refs(reference, n, cfg.window_duration_s, cfg.seed, Stage::ReferenceSampling)?;
        let mrefs = mismatch_refs(reference, &refs, seed::derive(cfg.seed, Stage::Mismatch, 0))?;
        let r_key = set_key(cfg, "R", reference, None);
        let r = self.cached(Some(r_key), cfg, notes, "R", n, &|i| Ok(materialize(reference, &refs[i])))?;
        let rp_key = set_key(cfg, "R'", reference, None);
        let rp = self.cached(Some(rp_key), cfg, notes, "R'", n, &|i| Ok(materialize(reference, &mrefs[i])))?;
        Ok((r, rp))
    }

    fn candidate_set(
        &mut self,
        candidate: Candidate<'_>,
        transform: &Transform,
        cfg: &RunConfig,
        notes: &mut Notes,
    ) -> Result<EmbeddingSet, PipelineError> {
        let seed = cfg.seed;
        match candidate {
            Candidate::Pairs(pairs) => {
                if pairs.len() < 2 {
                    return Err(PipelineError::InvalidConfig(format!(
                        "{} candidate pairs; at least 2 needed",
                        pairs.len()
                    )));
                }
                let pairs: Vec<WindowPair> = if *transform == Transform::Substitute {
                    crate::stats::mismatch_pairs(pairs, seed::derive(seed, Stage::Substitution, 0))?
                } else {
                    pairs.to_vec()
                };
                let make = |i: usize| transformed(&pairs[i], transform, seed, i);
                self.cached(None, cfg, notes, "C", pairs.len(), &make)
            }
            Candidate::Corpus(corpus) => {
                let n = cfg.n_windows;
                let mut refs = sample_refs(corpus, n, cfg.window_duration_s, seed, Stage::CandidateSampling)?;
                if *transform == Transform::Substitute {
                    refs = mismatch_refs(corpus, &refs, seed::derive(seed, Stage::Substitution, 0))?;
                }
                let key = set_key(cfg, "C", corpus, Some(transform));
                let refs: &[WindowRef] = &refs;
                let make = |i: usize| transformed(&materialize(corpus, &refs[i]), transform, seed, i);
                self.cached(Some(key), cfg, notes, "C", n, &make)
            }
        }
    }

    /// Scores `candidate` against `reference` under `cfg`.
    pub fn compute_apa(
        &mut self,
        reference: &Corpus,
        candidate: Candidate<'_>,
        cfg: &RunConfig,
    ) -> Result<ApaReport, PipelineError> {
        self.compute_with(reference, candidate, &Transform::True, cfg)
    }

    pub(super) fn compute_with(
        &mut self,
        reference: &Corpus,
        candidate: Candidate<'_>,
        transform: &Transform,
        cfg: &RunConfig,
    ) -> Result<ApaReport, PipelineError> {
        let started = Instant::now();
        let mut notes = Notes::default();
        let (r, rp) = self.reference_sets_noted(reference, cfg, &mut notes)?;
        let c = self.candidate_set(candidate, transform, cfg, &mut notes)?;
        let (gr, grp, gc, dim) = fit_all(&r, &rp, &c, cfg.projection)?;
        let result = apa_score(&gc, &gr, &grp)?;
        if result.clipped {
            notes
                .warnings
                .push(format!("APA clipped from {} to {}", result.apa_raw, result.apa));
        }
        let candidate_id = match candidate {
            Candidate::Corpus(c) => c.fingerprint().to_string(),
            Candidate::Pairs(p) => format!("{} prebuilt pairs", p.len()),
        };
        let fingerprint = sha_hex(
            format!(
                "{}|{}|{}|{transform:?}",
                serde_json::to_string(cfg).expect("config is serializable"),
                reference.fingerprint(),
                candidate_id
            )
            .as_bytes(),
        );
        Ok(ApaReport {
            fingerprint,
            config: cfg.clone(),
            embedder: r.embedder.clone(),
            dim,
            result,
            counts: SetCounts {
                reference: r.count(),
                mismatched: rp.count(),
                candidate: c.count(),
            },
            warnings: notes.warnings,
            wall_clock_s: started.elapsed().as_secs_f64(),
        })
    }
}

fn set_key(
    cfg: &RunConfig,
    role: &str,
    corpus: &Corpus,
    transform: Option<&Transform>,
) -> String {
    let key = SetKey {
        format: CACHE_FORMAT,
        role,
        corpus: corpus.fingerprint(),
        transform: transform.map(|t| format!("{t:?}")),
        regime: cfg.regime,
        embedder: cfg.embedder.key(),
        window_duration_s: cfg.window_duration_s,
        n_windows: cfg.n_windows,
        seed: cfg.seed,
    };
    sha_hex(&serde_json::to_vec(&key).expect("key is serializable"))
}

fn transformed(pair: &WindowPair, transform: &Transform, seed: u64, i: usize) -> Result<WindowPair, PipelineError> {
    match transform {
        Transform::True | Transform::Substitute => Ok(pair.clone()),
        t => {
            let stem = t.apply(&pair.stem, seed::derive(seed, Stage::Transform, i as u64))?;
            Ok(WindowPair {
                context: pair.context.clone(),
                stem,
                matched: false,
            })
        }
    }
}

/// Fits the projection on R, applies it to all three sets and fits Gaussians.
fn fit_all(
    r: &EmbeddingSet,
    rp: &EmbeddingSet,
    c: &EmbeddingSet,
    projection: Projection,
) -> Result<(GaussianStats, GaussianStats, GaussianStats, usize), PipelineError> {
    let (mr, mrp, mc): (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) = (r.to_matrix(), rp.to_matrix(), c.to_matrix());
    let (mr, mrp, mc) = match projection {
        Projection::Np => (mr, mrp, mc),
        mode => {
            let p = fit_pca_matrix(&mr, mode)?;
            (p.project_matrix(&mr)?, p.project_matrix(&mrp)?, p.project_matrix(&mc)?)
        }
    };
    let dim = mr.ncols();
    Ok((
        GaussianStats::fit(&mr)?,
        GaussianStats::fit(&mrp)?,
        GaussianStats::fit(&mc)?,
        dim,
    ))
}
