use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pvp_core::{
    read_manifest, write_manifest, Label, PhonemeInterval, SynthSpec, UtteranceFeatures,
};

fn pvp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pvp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, spec: &SynthSpec, n: usize) {
    let spec_path = dir.join("spec.json");
    fs::write(&spec_path, serde_json::to_string(spec).unwrap()).unwrap();
    let n = n.to_string();
    let out = pvp(&[
        "synth",
        "--spec",
        path(&spec_path),
        "--out",
        path(dir),
        "--n-enroll",
        &n,
        "--n-genuine",
        &n,
        "--n-spoof",
        &n,
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn full_pipeline_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, &SynthSpec::standard(12, 4, 3, 3.0, 1), 40);
    let (enroll, test) = (d.join("enroll.jsonl"), d.join("test.jsonl"));
    let (profile, scores, eval) = (
        d.join("profile.json"),
        d.join("scores.jsonl"),
        d.join("eval.json"),
    );

    let out = pvp(&[
        "build-profile",
        "--manifest",
        path(&enroll),
        "--out",
        path(&profile),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("phoneme models"));

    let out = pvp(&[
        "score",
        "--profile",
        path(&profile),
        "--manifest",
        path(&test),
        "--out",
        path(&scores),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(fs::read_to_string(&scores).unwrap().lines().count(), 80);

    let out = pvp(&[
        "evaluate",
        "--scores",
        path(&scores),
        "--labels",
        path(&test),
        "--out",
        path(&eval),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&eval).unwrap()).unwrap();
    assert!(summary["auc_percent"].as_f64().unwrap() > 90.0);
    let roc = fs::read_to_string(d.join("eval.roc.csv")).unwrap();
    assert!(roc.starts_with("fpr,tpr,threshold"));

    let explain_dir = d.join("explain");
    let out = pvp(&[
        "explain",
        "--profile",
        path(&profile),
        "--manifest",
        path(&test),
        "--out",
        path(&explain_dir),
        "--format",
        "csv",
        "--id",
        "spoof-00003",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(explain_dir.join("spoof-00003.csv")).unwrap();
    assert!(csv.starts_with("phoneme,start_s,end_s,score,level"));

    let mut other = SynthSpec::standard(12, 4, 3, 0.0, 5);
    other.speaker_id = "other".into();
    let (mut pool, _) = pvp_core::generate(&other, 10, 0, 0).unwrap();
    for u in &mut pool {
        u.utterance_id = format!("other-{}", u.utterance_id);
    }
    pool.extend(read_manifest(&enroll).unwrap());
    let speakers = d.join("speakers.jsonl");
    write_manifest(&pool, &speakers).unwrap();
    let matrix = d.join("dist.csv");
    let out = pvp(&[
        "distinctiveness",
        "--manifest",
        path(&speakers),
        "--out",
        path(&matrix),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("2 speakers"));
    assert!(matrix.exists());

    let leftovers: Vec<_> = fs::read_dir(d)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().ends_with(".partial"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn dimension_mismatch_exits_with_precondition_code() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let wide = d.join("wide");
    let narrow = d.join("narrow");
    fs::create_dir_all(&wide).unwrap();
    fs::create_dir_all(&narrow).unwrap();
    synth(&wide, &SynthSpec::standard(6, 16, 2, 1.0, 2), 20);
    synth(&narrow, &SynthSpec::standard(6, 8, 2, 1.0, 2), 5);
    let profile = d.join("profile.json");
    let out = pvp(&[
        "build-profile",
        "--manifest",
        path(&wide.join("enroll.jsonl")),
        "--out",
        path(&profile),
    ]);
    assert!(out.status.success());

    let scores = d.join("scores.jsonl");
    let out = pvp(&[
        "score",
        "--profile",
        path(&profile),
        "--manifest",
        path(&narrow.join("test.jsonl")),
        "--out",
        path(&scores),
    ]);
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("16") && err.contains('8'), "{err}");
    assert!(!scores.exists());
}

fn utterance(id: &str, label: Label, value: f64) -> UtteranceFeatures {
    UtteranceFeatures {
        utterance_id: id.into(),
        speaker_id: "poi".into(),
        label,
        frame_rate_hz: 100.0,
        frames: vec![vec![value]],
        phoneme_intervals: vec![PhonemeInterval::new("a", 0, 0)],
        speaker_embedding: None,
    }
}

#[test]
fn perfectly_separated_scores_have_zero_eer() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let labels = d.join("labels.jsonl");
    write_manifest(
        &[
            utterance("g1", Label::Bonafide, 0.0),
            utterance("g2", Label::Bonafide, 0.0),
            utterance("s1", Label::Spoof, 0.0),
            utterance("s2", Label::Spoof, 0.0),
        ],
        &labels,
    )
    .unwrap();
    let scores = d.join("scores.jsonl");
    fs::write(
        &scores,
        [("g1", 0.9), ("g2", 0.8), ("s1", 0.2), ("s2", 0.1)]
            .iter()
            .map(|(id, s)| format!("{{\"id\":\"{id}\",\"tier\":\"generic\",\"s_phn\":{s},\"s_spk\":null,\"s_final\":{s}}}\n"))
            .collect::<String>(),
    )
    .unwrap();
    let out = pvp(&[
        "evaluate",
        "--scores",
        path(&scores),
        "--labels",
        path(&labels),
        "--out",
        path(&d.join("e.json")),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("AUC 100.00 EER 0.00"), "{stdout}");
}

#[test]
fn error_classes_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = pvp(&[
        "build-profile",
        "--manifest",
        path(&d.join("missing.jsonl")),
        "--out",
        path(&d.join("p.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));

    let bad = d.join("bad.jsonl");
    fs::write(
        &bad,
        "{\"schema\":\"pvp-features/1\",\"dim\":1}\nnot json\n",
    )
    .unwrap();
    let out = pvp(&[
        "build-profile",
        "--manifest",
        path(&bad),
        "--out",
        path(&d.join("p.json")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}
