mod common;

use std::sync::OnceLock;

use apa_core::perturb::{PerturbError, Transform};
use apa_core::pipeline::synth::{synth_corpus, SynthOptions};
use apa_core::pipeline::{
    compute_apa, run_validation, sample_window_pairs, ApaReport, Candidate, Corpus, EmbedderChoice, Engine,
    PairManifest, PipelineError, RunConfig,
};
use common::{echo_bin, synth_manifest};

fn small_cfg(n: usize) -> RunConfig {
    RunConfig {
        n_windows: n,
        seed: 11,
        ..RunConfig::default()
    }
}

fn corpus() -> &'static Corpus {
    static C: OnceLock<Corpus> = OnceLock::new();
    C.get_or_init(|| synth_corpus(&SynthOptions::default()))
}

/// The same songs with every stem moved to the next song.
fn deranged(c: &Corpus) -> Corpus {
    let songs = c.songs();
    let moved = (0..songs.len())
        .map(|i| {
            let mut s = songs[i].clone();
            s.stem = songs[(i + 1) % songs.len()].stem.clone();
            s
        })
        .collect();
    Corpus::from_songs(moved)
}

#[test]
fn same_and_deranged_candidates_hit_the_endpoints() {
    let c = corpus();
    let cfg = small_cfg(1000);
    let mut engine = Engine::new(None);
    let same = engine.compute_apa(c, Candidate::Corpus(c), &cfg).unwrap();
    assert!(same.result.apa >= 0.95, "same corpus: {:?}", same.result);
    let other = deranged(c);
    let swapped = engine.compute_apa(c, Candidate::Corpus(&other), &cfg).unwrap();
    assert!(swapped.result.apa <= 0.05, "deranged corpus: {:?}", swapped.result);
    assert_eq!(same.result.fad_rrp, swapped.result.fad_rrp);
}

#[test]
fn reference_windows_as_candidate_score_exactly_one() {
    let c = corpus();
    let cfg = small_cfg(40);
    let pairs = sample_window_pairs(c, cfg.n_windows, cfg.window_duration_s, cfg.seed).unwrap();
    let report = Engine::new(None).compute_apa(c, Candidate::Pairs(&pairs), &cfg).unwrap();
    assert_eq!(report.result.fad_cr, 0.0);
    assert_eq!(report.result.apa, 1.0);
    assert_eq!(report.counts.candidate, 40);
}

#[test]
fn single_song_reference_cannot_be_mismatched() {
    let dir = tempfile::tempdir().unwrap();
    let m = PairManifest::load(synth_manifest(dir.path(), 1, 8.0, 0)).unwrap();
    let err = compute_apa(&m, &m, &small_cfg(10)).unwrap_err();
    assert!(
        matches!(err, PipelineError::Perturb(PerturbError::InfeasibleDerangement { .. })),
        "{err}"
    );
}

#[test]
fn manifest_entry_points_agree_with_the_engine() {
    let dir = tempfile::tempdir().unwrap();
    let m = PairManifest::load(synth_manifest(dir.path(), 4, 8.0, 5)).unwrap();
    let cfg = small_cfg(20);
    let a = compute_apa(&m, &m, &cfg).unwrap();
    let b = compute_apa(&m, &m, &cfg).unwrap();
    assert_eq!(a.result, b.result);
    assert_eq!(a.fingerprint, b.fingerprint);
    let c = Corpus::load(&m).unwrap();
    let direct = Engine::new(None).compute_apa(&c, Candidate::Corpus(&c), &cfg).unwrap();
    assert_eq!(a.result, direct.result);

    assert!(matches!(run_validation(&m, &[], std::slice::from_ref(&cfg)), Err(PipelineError::EmptyInput)));
    let v = run_validation(&m, &[Transform::True, Transform::Substitute], &[cfg]).unwrap();
    assert_eq!(v.rows.len(), 2);
    assert_eq!(v.summaries[0].cles, Some(1.0));
}

#[test]
fn report_json_round_trips() {
    let c = corpus();
    let report = Engine::new(None)
        .compute_apa(c, Candidate::Corpus(c), &small_cfg(30))
        .unwrap();
    let json = serde_json::to_string(&report).unwrap();
    let back: ApaReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, report);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    for key in ["fad_cr", "fad_crp", "fad_rrp", "apa_raw", "apa", "clipped"] {
        assert!(v["result"].get(key).is_some(), "missing {key}");
    }
}

#[test]
fn cache_is_value_transparent() {
    let c = corpus();
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_cfg(30);
    let fresh = Engine::new(Some(dir.path().to_path_buf()))
        .compute_apa(c, Candidate::Corpus(c), &cfg)
        .unwrap();
    let files = std::fs::read_dir(dir.path()).unwrap().count();
    assert_eq!(files, 3, "R, R' and C sets are cached");

    let reloaded = Engine::new(Some(dir.path().to_path_buf()))
        .compute_apa(c, Candidate::Corpus(c), &cfg)
        .unwrap();
    assert_eq!(reloaded.result, fresh.result);

    for f in std::fs::read_dir(dir.path()).unwrap() {
        std::fs::remove_file(f.unwrap().path()).unwrap();
    }
    let recomputed = Engine::new(Some(dir.path().to_path_buf()))
        .compute_apa(c, Candidate::Corpus(c), &cfg)
        .unwrap();
    assert!((recomputed.result.apa - fresh.result.apa).abs() <= 1e-9);
    assert_eq!(recomputed.result, fresh.result);

    let other_seed = Engine::new(Some(dir.path().to_path_buf()))
        .compute_apa(c, Candidate::Corpus(c), &RunConfig { seed: 12, ..cfg })
        .unwrap();
    assert_ne!(other_seed.result, fresh.result);
}

#[test]
fn echo_bridge_drives_the_pipeline() {
    let c = corpus();
    let cfg = RunConfig {
        embedder: EmbedderChoice::Bridge {
            command: format!("{} --dim 6", echo_bin()),
        },
        ..small_cfg(40)
    };
    let report = Engine::new(None).compute_apa(c, Candidate::Corpus(c), &cfg).unwrap();
    assert_eq!(report.embedder.id, "echo-test");
    assert_eq!(report.dim, 6);
    assert!((0.0..=1.0).contains(&report.result.apa));
}
