//! Scoring of test utterances against a [`SpeakerProfile`].
//!
//! Every phoneme instance is scored under the most specific model the
//! profile offers (its own phoneme model, else its broad-class model) and
//! squashed into `(0, 1)` with a logistic map. The utterance-level phoneme
//! score comes from the first tier that has evidence:
//!
//! 1. salient phonemes, averaged with their reliability weights;
//! 2. any enrolled phoneme, plain average;
//! 3. broad-class models, plain average.
//!
//! The phoneme score is then fused linearly with the speaker-embedding score.
//! Higher scores mean more consistent with the enrolled speaker.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::features::UtteranceFeatures;
use crate::phonetics::broad_class;
use crate::profile::SpeakerProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchLevel {
    Salient,
    Generic,
    Class,
    Unmatched,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Salient,
    Generic,
    Class,
    SpeakerOnly,
}

impl Tier {
    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Salient => "salient",
            Tier::Generic => "generic",
            Tier::Class => "class",
            Tier::SpeakerOnly => "speaker_only",
        }
    }
}

impl MatchLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            MatchLevel::Salient => "salient",
            MatchLevel::Generic => "generic",
            MatchLevel::Class => "class",
            MatchLevel::Unmatched => "unmatched",
        }
    }
}

/// Score of one phoneme instance. Unmatched instances carry no score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhonemeScore {
    pub phoneme_label: String,
    pub interval: (usize, usize),
    pub raw_log_likelihood: Option<f64>,
    pub normalized_score: Option<f64>,
    pub matched_level: MatchLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub utterance_id: String,
    pub phoneme_scores: Vec<PhonemeScore>,
    pub tier_used: Tier,
    pub phoneme_score: Option<f64>,
    pub speaker_score: Option<f64>,
    pub final_score: f64,
}

/// Ablation switches. The default enables everything.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoreOptions {
    /// When false the salient tier is skipped and salient phonemes are
    /// averaged with all other enrolled phonemes.
    pub salient_tier: bool,
    /// When false the speaker-embedding branch is ignored.
    pub speaker_branch: bool,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            salient_tier: true,
            speaker_branch: true,
        }
    }
}

/// Logistic map of a log-likelihood centred at `sigmoid_center` with scale
/// `sigmoid_scale`.
pub fn normalize_score(log_likelihood: f64, config: &Config) -> f64 {
    let z = (log_likelihood - config.sigmoid_center) / config.sigmoid_scale;
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Applies the tiered decision to already scored phoneme instances.
pub fn tiered_phoneme_score(
    profile: &SpeakerProfile,
    instance_scores: &[PhonemeScore],
    options: &ScoreOptions,
) -> (Tier, Option<f64>) {
    let scored = || {
        instance_scores
            .iter()
            .filter_map(|s| s.normalized_score.map(|v| (s, v)))
    };

    if options.salient_tier {
        // Weights exp(L/scale) are rescaled by their maximum; the ratio is
        // unchanged and cannot underflow to 0/0.
        let salient: Vec<(f64, f64)> = scored()
            .filter(|(s, _)| profile.is_salient(&s.phoneme_label))
            .map(|(s, v)| {
                let m = &profile.phoneme_models[&s.phoneme_label];
                (m.mean_log_likelihood / profile.config.weight_scale, v)
            })
            .collect();
        if !salient.is_empty() {
            let top = salient
                .iter()
                .map(|(l, _)| *l)
                .fold(f64::NEG_INFINITY, f64::max);
            let (num, den) = salient.iter().fold((0.0, 0.0), |(num, den), (l, v)| {
                let w = (l - top).exp();
                (num + w * v, den + w)
            });
            return (Tier::Salient, Some(num / den));
        }
    }

    if let Some(s) = mean(
        scored()
            .filter(|(s, _)| profile.phoneme_models.contains_key(&s.phoneme_label))
            .map(|(_, v)| v),
    ) {
        return (Tier::Generic, Some(s));
    }

    if let Some(s) = mean(
        scored()
            .filter(|(s, _)| s.matched_level == MatchLevel::Class)
            .map(|(_, v)| v),
    ) {
        return (Tier::Class, Some(s));
    }

    (Tier::SpeakerOnly, None)
}

pub fn score_utterance(
    profile: &SpeakerProfile,
    utterance: &UtteranceFeatures,
) -> Result<ScoreReport> {
    score_utterance_with(profile, utterance, &ScoreOptions::default())
}

pub fn score_utterance_with(
    profile: &SpeakerProfile,
    utterance: &UtteranceFeatures,
    options: &ScoreOptions,
) -> Result<ScoreReport> {
    utterance
        .validate()
        .map_err(|m| Error::InvalidInput(format!("utterance '{}': {m}", utterance.utterance_id)))?;
    if utterance.dim() != profile.embedding_dim {
        return Err(Error::DimensionMismatch {
            expected: profile.embedding_dim,
            found: utterance.dim(),
        });
    }
    let config = &profile.config;

    let phoneme_scores: Vec<PhonemeScore> = utterance
        .pool_phoneme_vectors()
        .into_iter()
        .map(|pv| {
            let (model, level) = if let Some(m) = profile.phoneme_models.get(&pv.phoneme_label) {
                let level = if profile.is_salient(&pv.phoneme_label) {
                    MatchLevel::Salient
                } else {
                    MatchLevel::Generic
                };
                (Some(&m.model), level)
            } else if let Some(c) = profile.class_models.get(&broad_class(&pv.phoneme_label)) {
                (Some(&c.model), MatchLevel::Class)
            } else {
                (None, MatchLevel::Unmatched)
            };
            let raw = model.map(|m| m.log_density_unchecked(&pv.vector));
            PhonemeScore {
                phoneme_label: pv.phoneme_label,
                interval: pv.interval,
                raw_log_likelihood: raw,
                normalized_score: raw.map(|l| normalize_score(l, config)),
                matched_level: level,
            }
        })
        .collect();

    let (tier_used, phoneme_score) = tiered_phoneme_score(profile, &phoneme_scores, options);

    let speaker_score = match (&utterance.speaker_embedding, &profile.speaker_model) {
        (Some(emb), Some(model)) if options.speaker_branch => {
            Some(normalize_score(model.log_density(emb)?, config))
        }
        _ => None,
    };

    let final_score = match (phoneme_score, speaker_score) {
        (Some(p), Some(s)) => fuse(p, s, config.fusion_alpha),
        (Some(p), None) => p,
        (None, Some(s)) => s,
        (None, None) => return Err(Error::NoEvidence(utterance.utterance_id.clone())),
    };

    Ok(ScoreReport {
        utterance_id: utterance.utterance_id.clone(),
        phoneme_scores,
        tier_used,
        phoneme_score,
        speaker_score,
        final_score,
    })
}

/// Linear interpolation between phoneme and speaker evidence.
pub fn fuse(phoneme_score: f64, speaker_score: f64, alpha: f64) -> f64 {
    alpha * phoneme_score + (1.0 - alpha) * speaker_score
}

/// Compact per-utterance record written by the `score` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRecord {
    pub id: String,
    pub tier: Tier,
    pub s_phn: Option<f64>,
    pub s_spk: Option<f64>,
    pub s_final: f64,
}

impl From<&ScoreReport> for ScoreRecord {
    fn from(r: &ScoreReport) -> Self {
        ScoreRecord {
            id: r.utterance_id.clone(),
            tier: r.tier_used,
            s_phn: r.phoneme_score,
            s_spk: r.speaker_score,
            s_final: r.final_score,
        }
    }
}

/// One row of a phoneme-level anomaly report: an interval in seconds and
/// its consistency score with the enrolled profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyRecord {
    pub phoneme: String,
    pub start_s: f64,
    pub end_s: f64,
    pub score: Option<f64>,
    pub level: MatchLevel,
}

/// Converts a report into time-stamped records in temporal order. Both
/// endpoints are frame indices divided by the frame rate.
pub fn explain(report: &ScoreReport, utterance: &UtteranceFeatures) -> Result<Vec<AnomalyRecord>> {
    if report.utterance_id != utterance.utterance_id {
        return Err(Error::InvalidInput(format!(
            "report '{}' does not belong to utterance '{}'",
            report.utterance_id, utterance.utterance_id
        )));
    }
    let rate = utterance.frame_rate_hz;
    let mut records: Vec<(usize, AnomalyRecord)> = report
        .phoneme_scores
        .iter()
        .map(|s| {
            (
                s.interval.0,
                AnomalyRecord {
                    phoneme: s.phoneme_label.clone(),
                    start_s: s.interval.0 as f64 / rate,
                    end_s: s.interval.1 as f64 / rate,
                    score: s.normalized_score,
                    level: s.matched_level,
                },
            )
        })
        .collect();
    records.sort_by_key(|(start, _)| *start);
    Ok(records.into_iter().map(|(_, r)| r).collect())
}

pub fn write_anomaly_json(records: &[AnomalyRecord], w: impl Write) -> Result<()> {
    serde_json::to_writer_pretty(w, records).map_err(|e| Error::io("<anomaly report>", e.into()))
}

pub fn write_anomaly_csv(records: &[AnomalyRecord], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::io("<anomaly report>", e.into());
    out.write_record(["phoneme", "start_s", "end_s", "score", "level"])
        .map_err(err)?;
    for r in records {
        out.write_record([
            r.phoneme.clone(),
            r.start_s.to_string(),
            r.end_s.to_string(),
            r.score.map(|s| s.to_string()).unwrap_or_default(),
            r.level.as_str().to_string(),
        ])
        .map_err(err)?;
    }
    out.flush().map_err(|e| Error::io("<anomaly report>", e))
}
