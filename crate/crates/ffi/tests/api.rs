use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use pvp_core::{generate, write_manifest, SynthSpec};
use pvp_ffi::*;

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = pvp_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn manifests(dir: &Path, dim: usize) -> (PathBuf, PathBuf) {
    let (enroll, test) = generate(&SynthSpec::standard(10, dim, 3, 3.0, 4), 40, 20, 20).unwrap();
    let (e, t) = (dir.join("enroll.jsonl"), dir.join("test.jsonl"));
    write_manifest(&enroll, &e).unwrap();
    write_manifest(&test, &t).unwrap();
    (e, t)
}

#[test]
fn score_and_evaluate_through_the_c_abi() {
    let dir = tempfile::tempdir().unwrap();
    let (e, t) = manifests(dir.path(), 4);
    unsafe {
        let (mut enroll, mut test, mut profile) =
            (ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
        assert_eq!(
            pvp_manifest_read(cstr(&e).as_ptr(), &mut enroll),
            PvpStatus::Ok
        );
        assert_eq!(
            pvp_manifest_read(cstr(&t).as_ptr(), &mut test),
            PvpStatus::Ok
        );
        assert_eq!(pvp_manifest_len(test), 40);
        assert_eq!(
            pvp_profile_build(enroll, ptr::null(), &mut profile),
            PvpStatus::Ok
        );
        assert!(pvp_profile_salient_count(profile) > 0);

        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for i in 0..pvp_manifest_len(test) {
            let mut report = ptr::null_mut();
            assert_eq!(
                pvp_score_utterance(profile, test, i, 0, 0, &mut report),
                PvpStatus::Ok
            );
            let mut tier = PvpTier::Class;
            assert_eq!(pvp_report_tier(report, &mut tier), PvpStatus::Ok);
            assert_eq!(tier, PvpTier::Salient);
            let (mut phn, mut spk) = (0.0, 0.0);
            assert_eq!(pvp_report_phoneme_score(report, &mut phn), 1);
            assert_eq!(pvp_report_speaker_score(report, &mut spk), 1);
            let fused = pvp_report_final_score(report);
            assert!((fused - (0.8 * phn + 0.2 * spk)).abs() < 1e-12);
            scores.push(fused);

            let mut label = PvpLabel::Unknown;
            assert_eq!(pvp_manifest_label(test, i, &mut label), PvpStatus::Ok);
            labels.push(label);

            let mut json = ptr::null_mut();
            assert_eq!(pvp_report_to_json(report, &mut json), PvpStatus::Ok);
            assert!(CStr::from_ptr(json)
                .to_str()
                .unwrap()
                .contains("\"tier_used\""));
            pvp_string_free(json);
            pvp_report_free(report);
        }
        let mut summary = PvpEvalSummary::default();
        assert_eq!(
            pvp_evaluate(scores.as_ptr(), labels.as_ptr(), scores.len(), &mut summary),
            PvpStatus::Ok
        );
        assert_eq!((summary.n_bonafide, summary.n_spoof), (20, 20));
        assert!(summary.auc_percent > 95.0);

        let saved = dir.path().join("profile.json");
        assert_eq!(
            pvp_profile_save(profile, cstr(&saved).as_ptr()),
            PvpStatus::Ok
        );
        let mut loaded = ptr::null_mut();
        assert_eq!(
            pvp_profile_load(cstr(&saved).as_ptr(), &mut loaded),
            PvpStatus::Ok
        );
        let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(pvp_profile_to_json(profile, &mut a), PvpStatus::Ok);
        assert_eq!(pvp_profile_to_json(loaded, &mut b), PvpStatus::Ok);
        assert_eq!(CStr::from_ptr(a), CStr::from_ptr(b));
        pvp_string_free(a);
        pvp_string_free(b);

        pvp_profile_free(loaded);
        pvp_profile_free(profile);
        pvp_manifest_free(test);
        pvp_manifest_free(enroll);
    }
}

#[test]
fn errors_carry_status_and_message() {
    let dir = tempfile::tempdir().unwrap();
    unsafe {
        let mut m = ptr::null_mut();
        let missing = cstr(&dir.path().join("missing.jsonl"));
        assert_eq!(pvp_manifest_read(missing.as_ptr(), &mut m), PvpStatus::Io);
        assert!(m.is_null());
        assert!(last_error().contains("missing.jsonl"));

        assert_eq!(
            pvp_manifest_read(ptr::null(), &mut m),
            PvpStatus::NullPointer
        );
        let bad_utf8 = [0xffu8, 0];
        assert_eq!(
            pvp_manifest_read(bad_utf8.as_ptr().cast(), &mut m),
            PvpStatus::InvalidUtf8
        );

        let (e, _) = manifests(dir.path(), 4);
        assert_eq!(pvp_manifest_read(cstr(&e).as_ptr(), &mut m), PvpStatus::Ok);
        assert!(pvp_last_error_message().is_null());

        let mut profile = ptr::null_mut();
        let config = CString::new(r#"{"fusion_alpha": 2.0}"#).unwrap();
        assert_eq!(
            pvp_profile_build(m, config.as_ptr(), &mut profile),
            PvpStatus::Precondition
        );
        let config = CString::new("{not json").unwrap();
        assert_ne!(
            pvp_profile_build(m, config.as_ptr(), &mut profile),
            PvpStatus::Ok
        );

        assert_eq!(
            pvp_profile_build(m, ptr::null(), &mut profile),
            PvpStatus::Ok
        );
        let mut report = ptr::null_mut();
        assert_eq!(
            pvp_score_utterance(profile, m, 999, 0, 0, &mut report),
            PvpStatus::OutOfRange
        );
        assert!(last_error().contains("999"));

        let mut summary = PvpEvalSummary::default();
        let scores = [0.5];
        let labels = [PvpLabel::Bonafide];
        assert_eq!(
            pvp_evaluate(scores.as_ptr(), labels.as_ptr(), 1, &mut summary),
            PvpStatus::Precondition
        );

        assert_eq!(pvp_manifest_len(ptr::null()), 0);
        assert!(pvp_report_final_score(ptr::null()).is_nan());
        pvp_profile_free(profile);
        pvp_manifest_free(m);
        pvp_manifest_free(ptr::null_mut());
    }
}

#[test]
fn normalization_and_version() {
    assert!((pvp_normalize_score(-2000.0, -2000.0, 200.0) - 0.5).abs() < 1e-12);
    assert!((pvp_normalize_score(-1800.0, -2000.0, 200.0) - 0.7310586).abs() < 1e-6);
    let v = unsafe { CStr::from_ptr(pvp_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

/// Compiles a small C program against the generated header and the static
/// library, then runs it on a synthetic manifest.
#[test]
fn c_program_links_and_runs() {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let target_dir = std::env::current_exe()
        .unwrap()
        .parent()
        .and_then(Path::parent)
        .unwrap()
        .to_path_buf();
    let lib = target_dir.join("libpvp_ffi.a");
    if Command::new("cc").arg("--version").output().is_err() || !lib.exists() {
        eprintln!("skipping: no C compiler or static library");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(crate_dir.join("tests/c_smoke.c"))
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let (e, t) = manifests(dir.path(), 6);
    let out = Command::new(&exe).arg(&e).arg(&t).output().unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.starts_with("AUC ") && stdout.contains("n=40"),
        "{stdout}"
    );
}
