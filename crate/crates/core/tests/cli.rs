mod common;

use std::path::Path;
use std::process::{Command, Output};

use apa_core::pipeline::ValidationReport;
use common::{apa_bin, echo_bin, synth_manifest};

fn apa(args: &[&str], cwd: &Path) -> Output {
    Command::new(apa_bin())
        .args(args)
        .current_dir(cwd)
        .env("APA_CACHE_DIR", cwd.join("cache"))
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&apa(&[], d)), 1);
    assert_eq!(code(&apa(&["score"], d)), 1);
    assert_eq!(code(&apa(&["frobnicate"], d)), 1);
    assert_eq!(code(&apa(&["score", "a", "b", "--regime", "X9"], d)), 1);
    assert_eq!(code(&apa(&["score", "a", "b", "--projection", "PCA0"], d)), 1);
    assert_eq!(code(&apa(&["score", "a", "b", "--windows", "1"], d)), 1);
    assert_eq!(code(&apa(&["score", "a", "b", "--embedder", "bridge"], d)), 1);
    assert_eq!(code(&apa(&["score", "a", "b", "--regime", "L0,L1"], d)), 1);
    let out = apa(&["score"], d);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn help_and_version_exit_0() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&apa(&["--help"], dir.path())), 0);
    assert_eq!(code(&apa(&["--version"], dir.path())), 0);
}

#[test]
fn missing_files_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = apa(&["score", "nope.json", "nope.json"], dir.path());
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.json"));
    assert_eq!(code(&apa(&["fad", "a.apae", "b.apae"], dir.path())), 2);
}

#[test]
fn degenerate_anchor_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let m = synth_manifest(&d.join("corpus"), 3, 7.0, 1);
    let m = m.to_str().unwrap();
    let bridge = format!("{} --dim 4 --zeros", echo_bin());
    let out = apa(
        &["score", m, m, "--windows", "8", "--embedder", "bridge", "--bridge-cmd", &bridge],
        d,
    );
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn validate_embed_and_fad() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let m = synth_manifest(&d.join("corpus"), 4, 7.0, 2);
    let m = m.to_str().unwrap();

    let out = apa(&["validate", m, "--windows", "12", "--report", "report.json"], d);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 7);
    assert!(lines[0].starts_with("config_id,regime,projection,embedder,transform"));
    let report: ValidationReport =
        serde_json::from_str(&std::fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.rows.len(), 6);
    assert_eq!(report.to_csv(), csv);

    let out = apa(
        &["validate", m, "--windows", "12", "--regime", "L0,PP", "--transforms", "TRUE,SUBS", "--out", "grid.csv"],
        d,
    );
    assert_eq!(code(&out), 0);
    let grid = std::fs::read_to_string(d.join("grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 5);
    assert!(grid.contains("cfg1,PP,NP"));

    assert_eq!(code(&apa(&["embed", m, "--windows", "12"], d)), 1);
    assert_eq!(code(&apa(&["embed", m, "--windows", "12", "--out", "r.apae"], d)), 0);
    let out = apa(&["fad", "r.apae", "r.apae"], d);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["fad"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn external_transform_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let m = synth_manifest(&d.join("corpus"), 3, 7.0, 4);
    let m = m.to_str().unwrap();
    let out = apa(
        &["validate", m, "--windows", "8", "--transforms", "TRUE", "--ext-cmd", "cat", "--ext-invariant"],
        d,
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    let ext = csv.lines().find(|l| l.contains(",EXT,")).unwrap();
    assert!(ext.contains(",invariant,"));
    assert_eq!(code(&apa(&["validate", m, "--transforms", "EXT"], d)), 1);
}
