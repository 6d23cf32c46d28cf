use std::collections::BTreeMap;

use sasrate::bridge::{BridgeOptions, BridgeRequest, BridgeSession, Endpoint, Transport, PROTOCOL_VERSION};
use sasrate::config::RunConfig;
use sasrate::corpus::{emotion_set, generate_group1, generate_group3, EmotionSetId, Vocabulary};
use sasrate::pipeline::{cmd_generate, cmd_rate, cmd_score, SasStatus};
use sasrate::sas::{score_dataset, OutputMode, SasDescriptor, SasKind, ScoringOptions};

fn server(args: &[&str]) -> Endpoint {
    let mut argv = vec![env!("CARGO_BIN_EXE_sasrate").to_string(), "serve".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    Endpoint::Command(argv)
}

fn external(name: &str, mode: OutputMode, endpoint: Endpoint) -> SasDescriptor {
    SasDescriptor {
        name: name.into(),
        kind: SasKind::External,
        output_mode: mode,
        seed: None,
        endpoint: Some(endpoint),
    }
}

#[test]
fn handshake_over_child_stdio() {
    let session = BridgeSession::connect(&server(&["--kind", "lexicon"]), &BridgeOptions::default()).unwrap();
    assert_eq!(session.peer().name, "sasrate-lexicon");
    assert_eq!(session.protocol_version(), PROTOCOL_VERSION);
    assert_eq!(session.transport(), Transport::ChildProcessStdio);
}

#[test]
fn lexicon_server_matches_native_scores() {
    let opts = ScoringOptions::default();
    let records = generate_group3(&Vocabulary::default(), &emotion_set(EmotionSetId::E5), 1).unwrap();
    for mode in [OutputMode::Continuous, OutputMode::Discrete] {
        let native = score_dataset(&SasDescriptor::builtin("n", SasKind::Lexicon, mode), &opts, &records).unwrap();
        let remote = score_dataset(&external("x", mode, server(&["--kind", "lexicon"])), &opts, &records).unwrap();
        assert_eq!(native.len(), remote.len());
        for (a, b) in native.iter().zip(&remote) {
            assert_eq!(a.record, b.record);
            assert_eq!(a.score.value().to_bits(), b.score.value().to_bits());
        }
    }
}

#[test]
fn random_server_matches_native_scores() {
    let opts = ScoringOptions::default();
    let records = generate_group1(&Vocabulary::default(), &emotion_set(EmotionSetId::E4), 2).unwrap();
    let native = score_dataset(
        &SasDescriptor::builtin("n", SasKind::Random, OutputMode::Continuous).with_seed(99),
        &opts,
        &records,
    )
    .unwrap();
    let remote = score_dataset(
        &external("x", OutputMode::Continuous, server(&["--kind", "random", "--seed", "99"])),
        &opts,
        &records,
    )
    .unwrap();
    let a: Vec<u64> = native.iter().map(|s| s.score.value().to_bits()).collect();
    let b: Vec<u64> = remote.iter().map(|s| s.score.value().to_bits()).collect();
    assert_eq!(a, b);
}

#[test]
fn peer_errors_are_per_request() {
    let mut session = BridgeSession::connect(&server(&["--kind", "lexicon"]), &BridgeOptions::default()).unwrap();
    let requests = vec![
        BridgeRequest {
            id: 1,
            text: "this girl feels happy".into(),
        },
        BridgeRequest {
            id: 2,
            text: "no emotion here".into(),
        },
        BridgeRequest {
            id: 3,
            text: "they feel grim".into(),
        },
    ];
    let out = session.score_batch(&requests, 2).unwrap();
    assert_eq!(out[0], Ok(0.8));
    assert!(out[1].is_err());
    assert_eq!(out[2], Ok(-0.4));
}

#[test]
fn missing_program_fails_to_connect() {
    let endpoint = Endpoint::Command(vec!["/nonexistent/sas-server".into()]);
    assert!(BridgeSession::connect(&endpoint, &BridgeOptions::default()).is_err());
}

/// The full 16-corpus sweep through the bridge rates exactly like the native lexicon.
#[test]
fn full_sweep_parity() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_sasrate");
    let json = format!(
        r#"{{"seed": 5, "sas": [
            {{"name": "native", "kind": "lexicon", "output_mode": "discrete"}},
            {{"name": "remote", "kind": "external", "output_mode": "discrete",
              "endpoint": {{"command": ["{bin}", "serve", "--kind", "lexicon"]}}}},
            {{"name": "Sb", "kind": "biased_female", "output_mode": "continuous"}}]}}"#
    );
    let config: RunConfig = serde_json::from_str(&json).unwrap();
    let out = dir.path();
    cmd_generate(&config, out).unwrap();
    let scored = cmd_score(&config, &out.join("corpus_manifest.json"), out).unwrap();
    assert!(scored.sas.iter().all(|s| s.status == SasStatus::Ok));
    let reports = cmd_rate(&config, &out.join("scored_manifest.json"), None, out).unwrap();
    let (_, report) = &reports[0];
    for (group, ratings) in &report.per_group {
        assert_eq!(ratings["native"], ratings["remote"], "{group}");
    }
    let psi: BTreeMap<_, _> = report
        .orders
        .iter()
        .map(|po| {
            let get = |n: &str| po.entries.iter().find(|(m, _)| m == n).unwrap().1;
            (po.group, (get("native"), get("remote")))
        })
        .collect();
    for (group, (a, b)) in psi {
        assert_eq!(a, b, "{group}");
    }
    let native = std::fs::read_to_string(out.join("scored/native/G4_E5.jsonl")).unwrap();
    let remote = std::fs::read_to_string(out.join("scored/remote/G4_E5.jsonl")).unwrap();
    assert_eq!(native.replace("\"sas\":\"native\"", "\"sas\":\"remote\""), remote);
}
