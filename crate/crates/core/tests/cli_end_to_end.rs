use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sasrate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sasrate")).args(args).output().unwrap()
}

fn write_config(dir: &Path, json: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const BUILTIN: &str = r#"{"seed": 3, "sas": [
    {"name": "Sb", "kind": "biased_female", "output_mode": "continuous"},
    {"name": "Sr", "kind": "random", "output_mode": "discrete"},
    {"name": "St", "kind": "lexicon", "output_mode": "discrete"}]}"#;

#[test]
fn generate_score_rate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), BUILTIN);
    let out = dir.path().join("run");

    let g = sasrate(&["generate", "--config", &cfg, "--out", s(&out)]);
    assert_eq!(g.status.code(), Some(0), "{}", String::from_utf8_lossy(&g.stderr));
    assert_eq!(fs::read_dir(out.join("corpus")).unwrap().count(), 16);

    let corpus = out.join("corpus_manifest.json");
    let sc = sasrate(&["score", "--config", &cfg, "--corpus", s(&corpus), "--out", s(&out)]);
    assert_eq!(sc.status.code(), Some(0), "{}", String::from_utf8_lossy(&sc.stderr));
    let scored_files: usize = ["Sb", "Sr", "St"]
        .iter()
        .map(|n| fs::read_dir(out.join("scored").join(n)).unwrap().count())
        .sum();
    assert_eq!(scored_files, 48);

    let scored = out.join("scored_manifest.json");
    let r = sasrate(&["rate", "--config", &cfg, "--scored", s(&scored), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let report = out.join("report");
    for f in [
        "ratings.md",
        "ratings.csv",
        "orders.md",
        "prominence.md",
        "psi.csv",
        "t_table_G1.csv",
        "t_table_G3_R.csv",
        "t_table_G3_G.csv",
        "t_table_G3_RG.csv",
        "die_table_G2.csv",
        "die_table_G4.csv",
    ] {
        assert!(report.join(f).exists(), "{f}");
    }
    let csv = fs::read_to_string(report.join("ratings.csv")).unwrap();
    assert!(csv.starts_with("sas,G1,G2,G3_R,G3_G,G3_RG,G4,overall\nSb,"));
    assert!(csv.contains("\nSt,1,1,1,1,1,1,1\n"));

    let r5 = sasrate(&["rate", "--config", &cfg, "--scored", s(&scored), "--out", s(&out), "--levels", "5"]);
    assert_eq!(r5.status.code(), Some(0));
    assert!(fs::read_to_string(report.join("ratings.md")).unwrap().starts_with("# Ratings (L = 5)"));
}

#[test]
fn stale_corpus_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"sas": [{"name": "St", "kind": "lexicon", "output_mode": "continuous"}],
            "groups": {"G1": {"emotion_sets": ["E3"]}}}"#,
    );
    let out = dir.path().join("run");
    assert_eq!(sasrate(&["generate", "--config", &cfg, "--out", s(&out)]).status.code(), Some(0));
    let corpus = out.join("corpus_manifest.json");
    assert_eq!(
        sasrate(&["score", "--config", &cfg, "--corpus", s(&corpus), "--out", s(&out)]).status.code(),
        Some(0)
    );
    let file = out.join("corpus/G1_E3.jsonl");
    let text = fs::read_to_string(&file).unwrap();
    fs::write(&file, text.replacen("this boy", "this man", 1)).unwrap();
    let scored = out.join("scored_manifest.json");
    let r = sasrate(&["rate", "--config", &cfg, "--scored", s(&scored), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("checksum mismatch"));
    let sc = sasrate(&["score", "--config", &cfg, "--corpus", s(&corpus), "--out", s(&out)]);
    assert_eq!(sc.status.code(), Some(1));
}

#[test]
fn validation_errors_exit_one_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"sas": [{"name": "r", "kind": "random", "output_mode": "discrete"}]}"#);
    let g = sasrate(&["generate", "--config", &cfg]);
    assert_eq!(g.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&g.stderr).contains("sas[0].seed"));

    let missing = sasrate(&["generate", "--config", s(&dir.path().join("nope.json"))]);
    assert_eq!(missing.status.code(), Some(1));
    assert_eq!(sasrate(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(sasrate(&["rate", "--config", &cfg]).status.code(), Some(1));
}

#[test]
fn unreachable_external_is_marked_failed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"sas": [
            {"name": "St", "kind": "lexicon", "output_mode": "continuous"},
            {"name": "gone", "kind": "external", "output_mode": "continuous",
             "endpoint": {"tcp": "127.0.0.1:1"}}],
            "groups": {"G1": {}, "G2": {}}}"#,
    );
    let out = dir.path().join("run");
    assert_eq!(sasrate(&["generate", "--config", &cfg, "--out", s(&out)]).status.code(), Some(0));
    let corpus = out.join("corpus_manifest.json");
    let sc = sasrate(&["score", "--config", &cfg, "--corpus", s(&corpus), "--out", s(&out)]);
    assert_eq!(sc.status.code(), Some(0));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("scored_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["sas"][0]["status"], "ok");
    assert_eq!(manifest["sas"][1]["status"], "failed");
    assert_eq!(manifest["sas"][0]["files"].as_array().unwrap().len(), 8);

    let scored = out.join("scored_manifest.json");
    let r = sasrate(&["rate", "--config", &cfg, "--scored", s(&scored), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(0));
    let md = fs::read_to_string(out.join("report/ratings.md")).unwrap();
    assert!(md.contains("Single system"));
    assert!(md.contains("| St | 1 | 1 | 1 |"));
    assert!(md.contains("group G3_R has no data; column omitted"));
}

#[test]
fn both_modes_give_two_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"seed": 1, "sas": [
            {"name": "Sb", "kind": "biased_female", "output_mode": "continuous"},
            {"name": "Sr", "kind": "random", "output_mode": "both"}],
            "groups": {"G1": {}}}"#,
    );
    let out = dir.path().join("run");
    sasrate(&["generate", "--config", &cfg, "--out", s(&out)]);
    let corpus = out.join("corpus_manifest.json");
    sasrate(&["score", "--config", &cfg, "--corpus", s(&corpus), "--out", s(&out)]);
    let line = fs::read_to_string(out.join("scored/Sr+d/G1_E1.jsonl")).unwrap();
    assert!(line.lines().all(|l| l.contains("\"sas\":\"Sr+d\"") && l.ends_with("\"discretized\":true}")));
    let scored = out.join("scored_manifest.json");
    assert_eq!(sasrate(&["rate", "--config", &cfg, "--scored", s(&scored), "--out", s(&out)]).status.code(), Some(0));
    let d = fs::read_to_string(out.join("report/discretized/ratings.csv")).unwrap();
    let c = fs::read_to_string(out.join("report/continuous/ratings.csv")).unwrap();
    assert!(d.contains("\nSr+d,") && d.contains("\nSb,") && !d.contains("\nSr,"));
    assert!(c.contains("\nSr,") && c.contains("\nSb,") && !c.contains("Sr+d"));
}

#[test]
fn selftest_passes() {
    let o = sasrate(&["selftest"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().all(|l| l.starts_with("PASS ")));
}
