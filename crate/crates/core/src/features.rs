//! Utterance feature data model and the JSON-lines feature manifest.
//!
//! A manifest is a header line followed by one utterance record per line:
//!
//! ```text
//! {"schema":"pvp-features/1","dim":2,"spk_dim":null}
//! {"id":"u1","speaker":"poi","label":"bonafide","frame_rate_hz":50.0,"frames":[[1.0,2.0]],"phonemes":[["a",0,0]],"spk_emb":null}
//! ```
//!
//! Phoneme intervals use inclusive frame indices.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FEATURES_SCHEMA: &str = "pvp-features/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Bonafide,
    Spoof,
    Unknown,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Bonafide => "bonafide",
            Label::Spoof => "spoof",
            Label::Unknown => "unknown",
        })
    }
}

/// A phoneme occurrence spanning frames `start..=end`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(String, usize, usize)", into = "(String, usize, usize)")]
pub struct PhonemeInterval {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

impl PhonemeInterval {
    pub fn new(label: impl Into<String>, start: usize, end: usize) -> Self {
        PhonemeInterval {
            label: label.into(),
            start,
            end,
        }
    }

    pub fn frame_count(&self) -> usize {
        self.end - self.start + 1
    }
}

impl From<(String, usize, usize)> for PhonemeInterval {
    fn from((label, start, end): (String, usize, usize)) -> Self {
        PhonemeInterval { label, start, end }
    }
}

impl From<PhonemeInterval> for (String, usize, usize) {
    fn from(p: PhonemeInterval) -> Self {
        (p.label, p.start, p.end)
    }
}

/// One utterance: frame embeddings, aligned phoneme intervals and an
/// optional utterance-level speaker embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceFeatures {
    #[serde(rename = "id")]
    pub utterance_id: String,
    #[serde(rename = "speaker")]
    pub speaker_id: String,
    pub label: Label,
    pub frame_rate_hz: f64,
    /// `T` rows of `D` values.
    pub frames: Vec<Vec<f64>>,
    #[serde(rename = "phonemes")]
    pub phoneme_intervals: Vec<PhonemeInterval>,
    #[serde(rename = "spk_emb")]
    pub speaker_embedding: Option<Vec<f64>>,
}

/// Mean-pooled representation of one phoneme instance.
#[derive(Debug, Clone, PartialEq)]
pub struct PhonemeVector {
    pub phoneme_label: String,
    pub vector: Vec<f64>,
    pub source_utterance_id: String,
    pub interval: (usize, usize),
}

/// Non-fatal findings raised while validating an utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidationWarning {
    OverlappingIntervals {
        utterance_id: String,
        first: usize,
        second: usize,
    },
}

impl fmt::Display for ValidationWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationWarning::OverlappingIntervals {
                utterance_id,
                first,
                second,
            } => write!(
                f,
                "utterance '{utterance_id}': intervals {first} and {second} overlap"
            ),
        }
    }
}

impl UtteranceFeatures {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    /// Frame embedding dimension, or 0 when there are no frames.
    pub fn dim(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }

    pub fn speaker_dim(&self) -> Option<usize> {
        self.speaker_embedding.as_ref().map(Vec::len)
    }

    /// Checks the hard invariants and returns soft warnings.
    pub fn validate(&self) -> std::result::Result<Vec<ValidationWarning>, String> {
        if self.utterance_id.is_empty() {
            return Err("empty utterance id".into());
        }
        if !(self.frame_rate_hz.is_finite() && self.frame_rate_hz > 0.0) {
            return Err(format!(
                "frame_rate_hz must be positive, got {}",
                self.frame_rate_hz
            ));
        }
        let t = self.frames.len();
        if t == 0 {
            return Err("utterance has no frames".into());
        }
        let d = self.frames[0].len();
        if d == 0 {
            return Err("frame dimension must be at least 1".into());
        }
        for (i, row) in self.frames.iter().enumerate() {
            if row.len() != d {
                return Err(format!(
                    "dimension mismatch: frame {i} has {} values, expected {d}",
                    row.len()
                ));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(format!("non-finite value in frame {i}"));
            }
        }
        let mut warnings = Vec::new();
        let mut prev: Option<&PhonemeInterval> = None;
        for (i, iv) in self.phoneme_intervals.iter().enumerate() {
            if iv.label.is_empty() {
                return Err(format!("interval {i} has an empty phoneme label"));
            }
            if iv.start > iv.end || iv.end >= t {
                return Err(format!(
                    "interval out of range: ('{}', {}, {}) with {t} frames",
                    iv.label, iv.start, iv.end
                ));
            }
            if let Some(p) = prev {
                if iv.start < p.start {
                    return Err(format!("interval {i} starts before interval {}", i - 1));
                }
                if iv.start <= p.end {
                    warnings.push(ValidationWarning::OverlappingIntervals {
                        utterance_id: self.utterance_id.clone(),
                        first: i - 1,
                        second: i,
                    });
                }
            }
            prev = Some(iv);
        }
        if let Some(emb) = &self.speaker_embedding {
            if emb.is_empty() {
                return Err("speaker embedding must have at least one value".into());
            }
            if emb.iter().any(|v| !v.is_finite()) {
                return Err("non-finite value in speaker embedding".into());
            }
        }
        Ok(warnings)
    }

    /// Mean-pools the frames of every phoneme interval, in interval order.
    pub fn pool_phoneme_vectors(&self) -> Vec<PhonemeVector> {
        self.phoneme_intervals
            .iter()
            .map(|iv| PhonemeVector {
                phoneme_label: iv.label.clone(),
                vector: mean_pool(&self.frames[iv.start..=iv.end]),
                source_utterance_id: self.utterance_id.clone(),
                interval: (iv.start, iv.end),
            })
            .collect()
    }
}

// Running mean: a span of identical frames pools back to that frame exactly.
fn mean_pool(rows: &[Vec<f64>]) -> Vec<f64> {
    let mut mean = rows[0].clone();
    for (k, row) in rows.iter().enumerate().skip(1) {
        let n = (k + 1) as f64;
        for (m, v) in mean.iter_mut().zip(row) {
            *m += (v - *m) / n;
        }
    }
    mean
}

pub fn pool_phoneme_vectors(utterance: &UtteranceFeatures) -> Vec<PhonemeVector> {
    utterance.pool_phoneme_vectors()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    schema: String,
    dim: usize,
    spk_dim: Option<usize>,
}

/// A parsed manifest together with the soft validation warnings.
#[derive(Debug, Clone, Default)]
pub struct ParsedManifest {
    pub utterances: Vec<UtteranceFeatures>,
    pub warnings: Vec<ValidationWarning>,
}

/// Reads a manifest, logging any validation warnings.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<UtteranceFeatures>> {
    let parsed = read_manifest_with_warnings(path)?;
    for w in &parsed.warnings {
        log::warn!("{w}");
    }
    Ok(parsed.utterances)
}

pub fn read_manifest_with_warnings(path: impl AsRef<Path>) -> Result<ParsedManifest> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn parse_manifest(reader: impl BufRead) -> Result<ParsedManifest> {
    let mut lines = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<manifest>", e))?;
        if !line.trim().is_empty() {
            lines.push((i + 1, line));
        }
    }
    let Some(((header_line, header_text), records)) = lines.split_first() else {
        return Err(Error::malformed(1, "missing header record"));
    };
    let header: Header = serde_json::from_str(header_text)
        .map_err(|e| Error::malformed(*header_line, format!("header: {e}")))?;
    if header.schema != FEATURES_SCHEMA {
        return Err(Error::Schema {
            expected: FEATURES_SCHEMA.into(),
            found: header.schema,
        });
    }
    if header.dim == 0 && !records.is_empty() {
        return Err(Error::malformed(
            *header_line,
            "header dim must be at least 1",
        ));
    }

    let parsed: Vec<(UtteranceFeatures, Vec<ValidationWarning>)> = records
        .par_iter()
        .map(|(line_no, text)| parse_record(*line_no, text, &header))
        .collect::<Result<_>>()?;

    let mut out = ParsedManifest::default();
    let mut ids = std::collections::HashSet::new();
    for ((utt, warnings), (line_no, _)) in parsed.into_iter().zip(records) {
        if !ids.insert(utt.utterance_id.clone()) {
            return Err(Error::malformed(
                *line_no,
                format!("id: duplicate utterance id '{}'", utt.utterance_id),
            ));
        }
        out.warnings.extend(warnings);
        out.utterances.push(utt);
    }
    Ok(out)
}

fn parse_record(
    line_no: usize,
    text: &str,
    header: &Header,
) -> Result<(UtteranceFeatures, Vec<ValidationWarning>)> {
    let utt: UtteranceFeatures =
        serde_json::from_str(text).map_err(|e| Error::malformed(line_no, e.to_string()))?;
    let warnings = utt
        .validate()
        .map_err(|m| Error::malformed(line_no, format!("{}: {m}", utt.utterance_id)))?;
    if utt.dim() != header.dim {
        return Err(Error::malformed(
            line_no,
            format!(
                "frames: dimension mismatch: header declares {}, record has {}",
                header.dim,
                utt.dim()
            ),
        ));
    }
    if let Some(d) = utt.speaker_dim() {
        if Some(d) != header.spk_dim {
            return Err(Error::malformed(
                line_no,
                format!(
                    "spk_emb: dimension mismatch: header declares {:?}, record has {d}",
                    header.spk_dim
                ),
            ));
        }
    }
    Ok((utt, warnings))
}

/// Checks that a set of utterances can share one manifest and returns its
/// header dimensions.
fn shared_dims(utterances: &[UtteranceFeatures]) -> Result<(usize, Option<usize>)> {
    let dim = utterances.first().map_or(0, UtteranceFeatures::dim);
    let mut spk_dim = None;
    for u in utterances {
        u.validate()
            .map_err(|m| Error::InvalidInput(format!("utterance '{}': {m}", u.utterance_id)))?;
        if u.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: u.dim(),
            });
        }
        match (spk_dim, u.speaker_dim()) {
            (None, Some(d)) => spk_dim = Some(d),
            (Some(a), Some(b)) if a != b => {
                return Err(Error::DimensionMismatch {
                    expected: a,
                    found: b,
                })
            }
            _ => {}
        }
    }
    Ok((dim, spk_dim))
}

pub fn write_manifest(utterances: &[UtteranceFeatures], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_manifest_to(utterances, &mut w).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_manifest_to(utterances: &[UtteranceFeatures], mut w: impl Write) -> Result<()> {
    let (dim, spk_dim) = shared_dims(utterances)?;
    let header = Header {
        schema: FEATURES_SCHEMA.into(),
        dim,
        spk_dim,
    };
    let io = |e: std::io::Error| Error::io("<manifest>", e);
    serde_json::to_writer(&mut w, &header).map_err(|e| io(e.into()))?;
    w.write_all(b"\n").map_err(io)?;
    for u in utterances {
        serde_json::to_writer(&mut w, u).map_err(|e| io(e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    Ok(())
}
