//! Detection metrics (ROC, AUC, EER) and per-speaker phoneme
//! distinctiveness.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Label, UtteranceFeatures};

/// One ROC operating point. `threshold` is the lowest accepted score; the
/// origin point (nothing accepted) has none.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub false_positive_rate: f64,
    pub true_positive_rate: f64,
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub roc: Vec<RocPoint>,
    pub auc_percent: f64,
    pub eer_percent: f64,
    pub eer_threshold: f64,
    pub n_bonafide: usize,
    pub n_spoof: usize,
}

/// Evaluates labelled scores where bona fide trials should score high.
pub fn evaluate(scores: &[(f64, Label)]) -> Result<EvalResult> {
    let mut bonafide = Vec::new();
    let mut spoof = Vec::new();
    for &(s, label) in scores {
        match label {
            Label::Bonafide => bonafide.push(s),
            Label::Spoof => spoof.push(s),
            Label::Unknown => {
                return Err(Error::InvalidInput(
                    "evaluation requires bonafide or spoof labels".into(),
                ))
            }
        }
    }
    evaluate_split(&bonafide, &spoof)
}

/// Builds the ROC by sweeping every distinct score as a threshold (equal
/// scores form a single step), integrates it with the trapezoid rule and
/// locates the equal error rate by linear interpolation on the segment
/// where `FAR - FRR` changes sign.
pub fn evaluate_split(bonafide: &[f64], spoof: &[f64]) -> Result<EvalResult> {
    if bonafide.is_empty() || spoof.is_empty() {
        return Err(Error::InvalidInput(
            "evaluation needs at least one bonafide and one spoof score".into(),
        ));
    }
    if bonafide.iter().chain(spoof).any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput("scores must be finite".into()));
    }
    let mut trials: Vec<(f64, bool)> = bonafide
        .iter()
        .map(|&s| (s, true))
        .chain(spoof.iter().map(|&s| (s, false)))
        .collect();
    trials.sort_by(|a, b| b.0.total_cmp(&a.0));

    let (nb, ns) = (bonafide.len() as f64, spoof.len() as f64);
    let mut roc = vec![RocPoint {
        false_positive_rate: 0.0,
        true_positive_rate: 0.0,
        threshold: None,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < trials.len() {
        let threshold = trials[i].0;
        while i < trials.len() && trials[i].0 == threshold {
            if trials[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        roc.push(RocPoint {
            false_positive_rate: fp as f64 / ns,
            true_positive_rate: tp as f64 / nb,
            threshold: Some(threshold),
        });
    }

    let auc = trapezoid_auc(&roc);
    let (eer, eer_threshold) = equal_error_rate(&roc);
    Ok(EvalResult {
        roc,
        auc_percent: 100.0 * auc,
        eer_percent: 100.0 * eer,
        eer_threshold,
        n_bonafide: bonafide.len(),
        n_spoof: spoof.len(),
    })
}

pub fn trapezoid_auc(roc: &[RocPoint]) -> f64 {
    roc.windows(2)
        .map(|w| {
            (w[1].false_positive_rate - w[0].false_positive_rate)
                * (w[1].true_positive_rate + w[0].true_positive_rate)
                / 2.0
        })
        .sum()
}

fn equal_error_rate(roc: &[RocPoint]) -> (f64, f64) {
    let gap = |p: &RocPoint| p.false_positive_rate - (1.0 - p.true_positive_rate);
    // gap runs from -1 at the origin to +1 at (1, 1)
    let idx = roc
        .iter()
        .position(|p| gap(p) >= 0.0)
        .expect("ROC ends at (1, 1)");
    let hi = &roc[idx];
    let hi_threshold = hi.threshold.expect("origin has negative gap");
    if gap(hi) == 0.0 {
        return (hi.false_positive_rate, hi_threshold);
    }
    let lo = &roc[idx - 1];
    let t = -gap(lo) / (gap(hi) - gap(lo));
    let eer = lo.false_positive_rate + t * (hi.false_positive_rate - lo.false_positive_rate);
    let threshold = match lo.threshold {
        Some(lo_t) => lo_t + t * (hi_threshold - lo_t),
        None => hi_threshold,
    };
    (eer, threshold)
}

pub fn write_roc_csv(result: &EvalResult, w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::io("<roc>", e.into());
    out.write_record(["fpr", "tpr", "threshold"]).map_err(err)?;
    for p in &result.roc {
        out.write_record([
            p.false_positive_rate.to_string(),
            p.true_positive_rate.to_string(),
            p.threshold.map(|t| t.to_string()).unwrap_or_default(),
        ])
        .map_err(err)?;
    }
    out.flush().map_err(|e| Error::io("<roc>", e))
}

/// speaker -> phoneme -> pooled phoneme vectors
pub type SpeakerPhonemeVectors = BTreeMap<String, BTreeMap<String, Vec<Vec<f64>>>>;

/// Groups the pooled phoneme vectors of a multi-speaker manifest.
pub fn group_by_speaker(utterances: &[UtteranceFeatures]) -> SpeakerPhonemeVectors {
    let mut out = SpeakerPhonemeVectors::new();
    for u in utterances {
        let per_phoneme = out.entry(u.speaker_id.clone()).or_default();
        for pv in u.pool_phoneme_vectors() {
            per_phoneme
                .entry(pv.phoneme_label)
                .or_default()
                .push(pv.vector);
        }
    }
    out
}

/// Speakers × phonemes matrix of cosine distances between each speaker's
/// mean phoneme vector and the phoneme's global centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct DistinctivenessMatrix {
    pub speakers: Vec<String>,
    pub phonemes: Vec<String>,
    /// `cells[s][p]`; `None` where the speaker lacks the phoneme or a
    /// vector has zero norm.
    pub cells: Vec<Vec<Option<f64>>>,
}

fn mean_vector<'a>(vectors: impl Iterator<Item = &'a Vec<f64>>, dim: usize) -> Option<Vec<f64>> {
    let mut acc = vec![0.0; dim];
    let mut n = 0usize;
    for v in vectors {
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
        n += 1;
    }
    (n > 0).then(|| acc.into_iter().map(|a| a / n as f64).collect())
}

/// `cos(a, b)`, or `None` when either vector has zero norm.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (na > 0.0 && nb > 0.0).then(|| (dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn phoneme_distinctiveness(
    per_speaker: &SpeakerPhonemeVectors,
) -> Result<DistinctivenessMatrix> {
    if per_speaker.len() < 2 {
        return Err(Error::InvalidInput(
            "distinctiveness needs at least two speakers".into(),
        ));
    }
    let mut dim = None;
    for v in per_speaker.values().flat_map(|m| m.values()).flatten() {
        match dim {
            None => dim = Some(v.len()),
            Some(d) if d != v.len() => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: v.len(),
                })
            }
            _ => {}
        }
    }
    let dim = dim.unwrap_or(0);
    let phonemes: Vec<String> = per_speaker
        .values()
        .flat_map(|m| m.keys().cloned())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let centroids: Vec<Option<Vec<f64>>> = phonemes
        .iter()
        .map(|p| mean_vector(per_speaker.values().filter_map(|m| m.get(p)).flatten(), dim))
        .collect();
    let cells = per_speaker
        .values()
        .map(|m| {
            phonemes
                .iter()
                .zip(&centroids)
                .map(|(p, c)| {
                    let v = mean_vector(m.get(p)?.iter(), dim)?;
                    cosine_similarity(&v, c.as_ref()?).map(|cos| 1.0 - cos)
                })
                .collect()
        })
        .collect();
    Ok(DistinctivenessMatrix {
        speakers: per_speaker.keys().cloned().collect(),
        phonemes,
        cells,
    })
}

pub fn write_distinctiveness_csv(m: &DistinctivenessMatrix, w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::io("<distinctiveness>", e.into());
    let mut header = vec!["speaker".to_string()];
    header.extend(m.phonemes.iter().cloned());
    out.write_record(&header).map_err(err)?;
    for (speaker, row) in m.speakers.iter().zip(&m.cells) {
        let mut record = vec![speaker.clone()];
        record.extend(
            row.iter()
                .map(|c| c.map(|v| v.to_string()).unwrap_or_default()),
        );
        out.write_record(&record).map_err(err)?;
    }
    out.flush().map_err(|e| Error::io("<distinctiveness>", e))
}
