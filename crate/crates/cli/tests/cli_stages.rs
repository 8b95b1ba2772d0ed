use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn pulse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pulse")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = pulse(args);
    assert!(out.status.success(), "pulse {args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A synthetic fixture plus a work directory that has been through ingest, match, geo and stance.
fn prepared(dir: &Path) -> (PathBuf, PathBuf) {
    let fx = dir.join("fx");
    let work = dir.join("work");
    ok(&["synth", "--out", s(&fx)]);
    prepare(&fx, &work);
    (fx, work)
}

fn prepare(fx: &Path, work: &Path) {
    let w = s(work);
    ok(&["--work", w, "ingest", "--in", s(&fx.join("synthetic_tweets.jsonl"))]);
    ok(&["--work", w, "match"]);
    ok(&["--work", w, "geo"]);
    ok(&["--work", w, "stance"]);
}

fn manifest(p: &Path) -> Value {
    let mut m: Value = serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap();
    for stage in m["stages"].as_object_mut().unwrap().values_mut() {
        stage["seconds"] = Value::from(0.0);
    }
    m
}

#[test]
fn stage_without_its_input_exits_2_and_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = pulse(&["--work", s(dir.path()), "stats"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stance.csv"));
    let out = pulse(&["--work", s(dir.path()), "match"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("corpus.jsonl"));
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "k = 3\nk = 4\n").unwrap();
    let out = pulse(&["--work", s(dir.path()), "--config", s(&cfg), "report"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn flags_override_config_which_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let (_, work) = prepared(dir.path());
    let w = s(&work);
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# clustering\nk = 3\nreps = 2\n").unwrap();
    ok(&["--work", w, "--config", s(&cfg), "cluster", "--k", "2"]);
    let m = manifest(&work.join("manifest.json"));
    let p = &m["stages"]["cluster"]["params"];
    assert_eq!(p["k"], "2");
    assert_eq!(p["reps"], "2");
    assert_eq!(p["pca_dim"], "30");
    // Hash of an empty config.
    assert_ne!(m["config_hash"], "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

#[test]
fn rerunning_a_stage_reproduces_its_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (_, work) = prepared(dir.path());
    let w = s(&work);
    ok(&["--work", w, "cluster", "--k", "3"]);
    let first = manifest(&work.join("manifest.json"));
    let bytes = std::fs::read(work.join("clusters.csv")).unwrap();
    ok(&["--work", w, "cluster", "--k", "3"]);
    assert_eq!(std::fs::read(work.join("clusters.csv")).unwrap(), bytes);
    assert_eq!(manifest(&work.join("manifest.json")), first);
}

#[test]
fn manifest_records_hashes_of_inputs_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (_, work) = prepared(dir.path());
    let m = manifest(&work.join("manifest.json"));
    let stance = &m["stages"]["stance"];
    assert_eq!(stance["inputs"]["us_tweets.jsonl"], m["stages"]["geo"]["outputs"]["us_tweets.jsonl"]);
    let hash = stance["outputs"]["stance.csv"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    assert_eq!(stance["params"]["classifier"], "rule");
}

#[test]
fn separate_runs_share_a_manifest_modulo_timings() {
    let dir = tempfile::tempdir().unwrap();
    let (fx, a) = prepared(dir.path());
    let b = dir.path().join("again");
    prepare(&fx, &b);
    assert_eq!(manifest(&a.join("manifest.json")), manifest(&b.join("manifest.json")));
}
