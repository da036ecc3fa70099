//! C ABI for `pvp-core`.
//!
//! Every fallible function returns a [`PvpStatus`]; on failure a message is
//! available from [`pvp_last_error_message`] on the same thread. Objects are
//! opaque handles owned by the caller and released with the matching
//! `*_free` function. Strings returned to the caller are released with
//! [`pvp_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pvp_core::metrics::evaluate_split;
use pvp_core::profile::profile_to_json;
use pvp_core::{
    build_profile, load_profile, normalize_score, read_manifest, save_profile,
    score_utterance_with, Config, ErrorKind, Label, ScoreOptions, ScoreReport, SpeakerProfile,
    Tier, UtteranceFeatures,
};

/// Status code returned by every fallible call. The I/O, format and
/// precondition codes match the exit codes of the `pvp` binary.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PvpStatus {
    Ok = 0,
    NullPointer = 1,
    Io = 2,
    Format = 3,
    Precondition = 4,
    InvalidUtf8 = 5,
    OutOfRange = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PvpTier {
    Salient = 0,
    Generic = 1,
    Class = 2,
    SpeakerOnly = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PvpLabel {
    Bonafide = 0,
    Spoof = 1,
    Unknown = 2,
}

/// Summary of a bona fide versus spoof evaluation, in percent.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PvpEvalSummary {
    pub auc_percent: f64,
    pub eer_percent: f64,
    pub eer_threshold: f64,
    pub n_bonafide: usize,
    pub n_spoof: usize,
}

/// A feature manifest held in memory.
pub struct PvpManifest(Vec<UtteranceFeatures>);

/// A speaker profile.
pub struct PvpProfile(SpeakerProfile);

/// The scoring result for one utterance.
pub struct PvpReport(ScoreReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(PvpStatus, String);

impl From<pvp_core::Error> for Failure {
    fn from(e: pvp_core::Error) -> Self {
        let status = match e.kind() {
            ErrorKind::Io => PvpStatus::Io,
            ErrorKind::Format => PvpStatus::Format,
            ErrorKind::Precondition => PvpStatus::Precondition,
        };
        Failure(status, e.to_string())
    }
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PvpStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PvpStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal error: {message}"));
            PvpStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(PvpStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(PvpStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message describing the last failed call on this thread, or null. The
/// pointer stays valid until the next call into this library on the thread.
#[no_mangle]
pub extern "C" fn pvp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pvp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Logistic normalisation of a log-likelihood.
#[no_mangle]
pub extern "C" fn pvp_normalize_score(log_likelihood: f64, center: f64, scale: f64) -> f64 {
    let config = Config {
        sigmoid_center: center,
        sigmoid_scale: scale,
        ..Config::default()
    };
    normalize_score(log_likelihood, &config)
}

/// Reads a JSON-lines feature manifest.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pvp_manifest_read(
    path: *const c_char,
    out: *mut *mut PvpManifest,
) -> PvpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = str_arg(path, "path")?;
        put(out, PvpManifest(read_manifest(path)?));
        Ok(())
    })
}

/// Number of utterances in a manifest; 0 for null.
///
/// # Safety
/// `manifest` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pvp_manifest_len(manifest: *const PvpManifest) -> usize {
    manifest.as_ref().map_or(0, |m| m.0.len())
}

/// Label of utterance `index`.
///
/// # Safety
/// `manifest` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pvp_manifest_label(
    manifest: *const PvpManifest,
    index: usize,
    out: *mut PvpLabel,
) -> PvpStatus {
    guard(|| {
        let m = ref_arg(manifest, "manifest")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let utt = utterance(m, index)?;
        *out = match utt.label {
            Label::Bonafide => PvpLabel::Bonafide,
            Label::Spoof => PvpLabel::Spoof,
            Label::Unknown => PvpLabel::Unknown,
        };
        Ok(())
    })
}

fn utterance(m: &PvpManifest, index: usize) -> Result<&UtteranceFeatures, Failure> {
    m.0.get(index).ok_or_else(|| {
        Failure(
            PvpStatus::OutOfRange,
            format!("index {index} out of range for {} utterances", m.0.len()),
        )
    })
}

/// # Safety
/// `manifest` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pvp_manifest_free(manifest: *mut PvpManifest) {
    if !manifest.is_null() {
        drop(Box::from_raw(manifest));
    }
}

/// Builds a profile from every utterance of `manifest`. `config_json` may be
/// null for the default configuration.
///
/// # Safety
/// `manifest` must be a live handle, `config_json` null or a NUL-terminated
/// string, and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pvp_profile_build(
    manifest: *const PvpManifest,
    config_json: *const c_char,
    out: *mut *mut PvpProfile,
) -> PvpStatus {
    guard(|| {
        let m = ref_arg(manifest, "manifest")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let config = if config_json.is_null() {
            Config::default()
        } else {
            Config::from_json_str(str_arg(config_json, "config_json")?)?
        };
        put(out, PvpProfile(build_profile(&m.0, &config)?));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pvp_profile_load(
    path: *const c_char,
    out: *mut *mut PvpProfile,
) -> PvpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = str_arg(path, "path")?;
        put(out, PvpProfile(load_profile(path)?));
        Ok(())
    })
}

/// # Safety
/// `profile` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pvp_profile_save(
    profile: *const PvpProfile,
    path: *const c_char,
) -> PvpStatus {
    guard(|| {
        let p = ref_arg(profile, "profile")?;
        save_profile(&p.0, str_arg(path, "path")?)?;
        Ok(())
    })
}

/// Serialises a profile to JSON. Release the string with [`pvp_string_free`].
///
/// # Safety
/// `profile` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pvp_profile_to_json(
    profile: *const PvpProfile,
    out: *mut *mut c_char,
) -> PvpStatus {
    guard(|| {
        let p = ref_arg(profile, "profile")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = c_string(profile_to_json(&p.0)?)?;
        Ok(())
    })
}

/// Number of salient phonemes in the profile; 0 for null.
///
/// # Safety
/// `profile` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pvp_profile_salient_count(profile: *const PvpProfile) -> usize {
    profile.as_ref().map_or(0, |p| p.0.salient_phonemes.len())
}

/// # Safety
/// `profile` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pvp_profile_free(profile: *mut PvpProfile) {
    if !profile.is_null() {
        drop(Box::from_raw(profile));
    }
}

/// Scores utterance `index` of `manifest`. Non-zero `skip_salient_tier` and
/// `skip_speaker` disable the salient tier and the speaker branch.
///
/// # Safety
/// `profile` and `manifest` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pvp_score_utterance(
    profile: *const PvpProfile,
    manifest: *const PvpManifest,
    index: usize,
    skip_salient_tier: i32,
    skip_speaker: i32,
    out: *mut *mut PvpReport,
) -> PvpStatus {
    guard(|| {
        let p = ref_arg(profile, "profile")?;
        let m = ref_arg(manifest, "manifest")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let options = ScoreOptions {
            salient_tier: skip_salient_tier == 0,
            speaker_branch: skip_speaker == 0,
        };
        let report = score_utterance_with(&p.0, utterance(m, index)?, &options)?;
        put(out, PvpReport(report));
        Ok(())
    })
}

/// Final fused score; NaN for null.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pvp_report_final_score(report: *const PvpReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.0.final_score)
}

/// Writes the phoneme-level score to `out` and returns 1, or returns 0 when
/// the utterance had no phoneme evidence.
///
/// # Safety
/// `report` must be null or a live handle, `out` null or a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pvp_report_phoneme_score(report: *const PvpReport, out: *mut f64) -> i32 {
    optional(report, out, |r| r.phoneme_score)
}

/// Writes the speaker-embedding score to `out` and returns 1, or returns 0
/// when that branch was not used.
///
/// # Safety
/// `report` must be null or a live handle, `out` null or a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pvp_report_speaker_score(report: *const PvpReport, out: *mut f64) -> i32 {
    optional(report, out, |r| r.speaker_score)
}

unsafe fn optional(
    report: *const PvpReport,
    out: *mut f64,
    f: impl Fn(&ScoreReport) -> Option<f64>,
) -> i32 {
    match (report.as_ref().and_then(|r| f(&r.0)), out.is_null()) {
        (Some(v), false) => {
            *out = v;
            1
        }
        _ => 0,
    }
}

/// Tier that produced the phoneme score.
///
/// # Safety
/// `report` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pvp_report_tier(report: *const PvpReport, out: *mut PvpTier) -> PvpStatus {
    guard(|| {
        let r = ref_arg(report, "report")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = match r.0.tier_used {
            Tier::Salient => PvpTier::Salient,
            Tier::Generic => PvpTier::Generic,
            Tier::Class => PvpTier::Class,
            Tier::SpeakerOnly => PvpTier::SpeakerOnly,
        };
        Ok(())
    })
}

/// Full report as JSON. Release the string with [`pvp_string_free`].
///
/// # Safety
/// `report` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pvp_report_to_json(
    report: *const PvpReport,
    out: *mut *mut c_char,
) -> PvpStatus {
    guard(|| {
        let r = ref_arg(report, "report")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let json =
            serde_json::to_string(&r.0).map_err(|e| Failure(PvpStatus::Format, e.to_string()))?;
        *out = c_string(json)?;
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pvp_report_free(report: *mut PvpReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

fn c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(PvpStatus::Format, "string contains NUL".into()))
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pvp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// ROC summary for `n` scores with matching labels. Unknown labels are
/// skipped.
///
/// # Safety
/// `scores` and `labels` must point to `n` elements; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pvp_evaluate(
    scores: *const f64,
    labels: *const PvpLabel,
    n: usize,
    out: *mut PvpEvalSummary,
) -> PvpStatus {
    guard(|| {
        if scores.is_null() || labels.is_null() || out.is_null() {
            return Err(null("scores, labels or out"));
        }
        let scores = std::slice::from_raw_parts(scores, n);
        let labels = std::slice::from_raw_parts(labels.cast::<i32>(), n);
        let (mut bona, mut spoof) = (Vec::new(), Vec::new());
        for (i, (&s, &l)) in scores.iter().zip(labels).enumerate() {
            match l {
                0 => bona.push(s),
                1 => spoof.push(s),
                2 => {}
                _ => {
                    return Err(Failure(
                        PvpStatus::OutOfRange,
                        format!("label {l} at index {i}"),
                    ))
                }
            }
        }
        let r = evaluate_split(&bona, &spoof)?;
        *out = PvpEvalSummary {
            auc_percent: r.auc_percent,
            eer_percent: r.eer_percent,
            eer_threshold: r.eer_threshold,
            n_bonafide: r.n_bonafide,
            n_spoof: r.n_spoof,
        };
        Ok(())
    })
}
