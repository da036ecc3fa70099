//! Speaker-specific deepfake scoring from phoneme-level voice profiles.
//!
//! A [`SpeakerProfile`] is built from bona fide reference features of one
//! person of interest: every phoneme gets a small diagonal Gaussian mixture
//! over its mean-pooled frame embeddings, the most self-consistent phonemes
//! are kept as salient fingerprints, and broad phonetic classes plus the
//! utterance-level speaker embedding get models of their own. Test
//! utterances are scored against the profile through a tiered phoneme
//! decision fused with the speaker-embedding likelihood.
//!
//! ```no_run
//! use pvp_core::{build_profile, read_manifest, score_utterance, Config};
//!
//! let enroll = read_manifest("enroll.jsonl")?;
//! let profile = build_profile(&enroll, &Config::default())?;
//! for utt in read_manifest("test.jsonl")? {
//!     let report = score_utterance(&profile, &utt)?;
//!     println!("{} {:.4}", report.utterance_id, report.final_score);
//! }
//! # Ok::<(), pvp_core::Error>(())
//! ```

pub mod cli;
pub mod config;
pub mod error;
pub mod features;
pub mod gmm;
pub mod metrics;
pub mod phonetics;
pub mod profile;
pub mod scoring;
pub mod synth;

pub use config::Config;
pub use error::{Error, ErrorKind, Result};
pub use features::{
    pool_phoneme_vectors, read_manifest, write_manifest, Label, PhonemeInterval, PhonemeVector,
    UtteranceFeatures,
};
pub use gmm::DiagonalGmm;
pub use metrics::{evaluate, phoneme_distinctiveness, EvalResult};
pub use phonetics::{broad_class, BroadClass};
pub use profile::{build_profile, load_profile, save_profile, SpeakerProfile};
pub use scoring::{
    explain, normalize_score, score_utterance, score_utterance_with, tiered_phoneme_score,
    ScoreOptions, ScoreReport, Tier,
};
pub use synth::{generate, SynthSpec};
