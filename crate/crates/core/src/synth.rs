//! Deterministic synthetic feature manifests.
//!
//! The enrolled speaker's phoneme vectors are drawn from known per-phoneme
//! Gaussian mixtures; impostor (spoof) utterances draw from the same
//! mixtures with shifted means, optionally only for a subset of phonemes.
//! Frames inside an interval are the drawn vector plus isotropic jitter, so
//! mean pooling approximately (or, with zero jitter, exactly) recovers it.

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Label, PhonemeInterval, UtteranceFeatures};

/// Common IPA symbols used for generated inventories.
const INVENTORY: [&str; 40] = [
    "a", "p", "i", "s", "m", "u", "t", "n", "e", "k", "o", "f", "l", "ə", "b", "z", "ŋ", "ɛ", "d",
    "ʃ", "j", "ɔ", "g", "x", "w", "æ", "ts", "ɪ", "h", "ʊ", "tɕ", "ʌ", "ɕ", "ɹ", "y", "v", "ɑ",
    "θ", "ð", "ʒ",
];

/// Generating mixture of one phoneme for the enrolled speaker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhonemeMixture {
    pub label: String,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

/// Offset added to impostor means: the same value in every dimension, or a
/// full vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Shift {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Shift {
    fn at(&self, d: usize) -> f64 {
        match self {
            Shift::Scalar(s) => *s,
            Shift::Vector(v) => v[d],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub dim: usize,
    pub spk_dim: usize,
    pub phonemes: Vec<PhonemeMixture>,
    pub impostor_shift: Shift,
    /// Phonemes whose impostor realisation is shifted; `None` shifts all.
    pub shifted_phonemes: Option<Vec<String>>,
    pub speaker_mean: Vec<f64>,
    pub speaker_variance: f64,
    /// Offset added to the impostor speaker-embedding mean.
    pub speaker_shift: Shift,
    /// Inclusive range of phoneme instances per utterance.
    pub utterance_length_range: (usize, usize),
    /// Inclusive range of frames per phoneme instance.
    pub frames_per_phoneme: (usize, usize),
    pub frame_jitter: f64,
    pub frame_rate_hz: f64,
    pub speaker_id: String,
    pub rng_seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec::standard(40, 8, 4, 3.0, 0)
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

impl SynthSpec {
    /// Inventory of `n_phonemes` labels, each a two-component unit-variance
    /// mixture with means drawn from `N(0, 4)`, and a shared impostor shift
    /// for phonemes and the speaker embedding.
    pub fn standard(n_phonemes: usize, dim: usize, spk_dim: usize, shift: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed);
        let phonemes = (0..n_phonemes)
            .map(|i| PhonemeMixture {
                label: INVENTORY
                    .get(i)
                    .map_or_else(|| format!("ph{i}"), |s| s.to_string()),
                weights: vec![0.5, 0.5],
                means: (0..2)
                    .map(|_| (0..dim).map(|_| 2.0 * normal(&mut rng)).collect())
                    .collect(),
                variances: vec![vec![1.0; dim]; 2],
            })
            .collect();
        SynthSpec {
            dim,
            spk_dim,
            phonemes,
            impostor_shift: Shift::Scalar(shift),
            shifted_phonemes: None,
            speaker_mean: (0..spk_dim).map(|_| normal(&mut rng)).collect(),
            speaker_variance: 1.0,
            speaker_shift: Shift::Scalar(shift),
            utterance_length_range: (8, 16),
            frames_per_phoneme: (3, 8),
            frame_jitter: 0.01,
            frame_rate_hz: 50.0,
            speaker_id: "poi".into(),
            rng_seed: seed,
        }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: SynthSpec = serde_json::from_str(&text)
            .map_err(|e| Error::malformed(e.line(), format!("synth spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(format!("synth spec: {m}")));
        if self.dim == 0 {
            return bad("dim must be positive".into());
        }
        if self.phonemes.is_empty() {
            return bad("phoneme inventory is empty".into());
        }
        let (lo, hi) = self.utterance_length_range;
        if lo > hi {
            return bad("utterance_length_range min exceeds max".into());
        }
        let (flo, fhi) = self.frames_per_phoneme;
        if flo == 0 || flo > fhi {
            return bad("frames_per_phoneme must be a non-empty positive range".into());
        }
        if !(self.frame_jitter.is_finite() && self.frame_jitter >= 0.0) {
            return bad("frame_jitter must be nonnegative".into());
        }
        if !(self.frame_rate_hz.is_finite() && self.frame_rate_hz > 0.0) {
            return bad("frame_rate_hz must be positive".into());
        }
        for p in &self.phonemes {
            let k = p.weights.len();
            if p.label.is_empty() || k == 0 || p.means.len() != k || p.variances.len() != k {
                return bad(format!("phoneme '{}' has an inconsistent mixture", p.label));
            }
            if p.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0))
                || p.weights.iter().sum::<f64>() <= 0.0
            {
                return bad(format!("phoneme '{}' has invalid weights", p.label));
            }
            for (m, v) in p.means.iter().zip(&p.variances) {
                if m.len() != self.dim || v.len() != self.dim {
                    return bad(format!("phoneme '{}' has wrong dimension", p.label));
                }
                if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                    return bad(format!("phoneme '{}' has non-positive variance", p.label));
                }
            }
        }
        if self.spk_dim > 0 {
            if self.speaker_mean.len() != self.spk_dim {
                return bad("speaker_mean length must equal spk_dim".into());
            }
            if !(self.speaker_variance.is_finite() && self.speaker_variance > 0.0) {
                return bad("speaker_variance must be positive".into());
            }
        }
        for (name, shift, len) in [
            ("impostor_shift", &self.impostor_shift, self.dim),
            ("speaker_shift", &self.speaker_shift, self.spk_dim),
        ] {
            if let Shift::Vector(v) = shift {
                if v.len() != len {
                    return bad(format!(
                        "{name} vector has length {}, expected {len}",
                        v.len()
                    ));
                }
            }
        }
        Ok(())
    }

    fn is_shifted(&self, label: &str) -> bool {
        self.shifted_phonemes
            .as_ref()
            .is_none_or(|s| s.iter().any(|l| l == label))
    }
}

#[derive(Clone, Copy)]
enum Group {
    Enroll,
    Genuine,
    Spoof,
}

impl Group {
    fn stream(self) -> u64 {
        match self {
            Group::Enroll => 1,
            Group::Genuine => 2,
            Group::Spoof => 3,
        }
    }

    fn prefix(self) -> &'static str {
        match self {
            Group::Enroll => "enroll",
            Group::Genuine => "genuine",
            Group::Spoof => "spoof",
        }
    }
}

fn generate_one(spec: &SynthSpec, group: Group, index: usize) -> UtteranceFeatures {
    // One independent stream per utterance keeps output independent of scheduling.
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    rng.set_stream((group.stream() << 40) | index as u64);
    let impostor = matches!(group, Group::Spoof);

    let (lo, hi) = spec.utterance_length_range;
    let n_phonemes = rng.random_range(lo..=hi);
    let mut frames = Vec::new();
    let mut intervals = Vec::with_capacity(n_phonemes);
    for _ in 0..n_phonemes {
        let p = &spec.phonemes[rng.random_range(0..spec.phonemes.len())];
        let k = WeightedIndex::new(&p.weights)
            .expect("validated weights")
            .sample(&mut rng);
        let shifted = impostor && spec.is_shifted(&p.label);
        let vector: Vec<f64> = (0..spec.dim)
            .map(|d| {
                let offset = if shifted {
                    spec.impostor_shift.at(d)
                } else {
                    0.0
                };
                p.means[k][d] + offset + p.variances[k][d].sqrt() * normal(&mut rng)
            })
            .collect();
        let n_frames = rng.random_range(spec.frames_per_phoneme.0..=spec.frames_per_phoneme.1);
        let start = frames.len();
        for _ in 0..n_frames {
            frames.push(
                vector
                    .iter()
                    .map(|v| v + spec.frame_jitter * normal(&mut rng))
                    .collect(),
            );
        }
        intervals.push(PhonemeInterval::new(
            p.label.clone(),
            start,
            frames.len() - 1,
        ));
    }
    if frames.is_empty() {
        frames.push(vec![0.0; spec.dim]);
    }

    let speaker_embedding = (spec.spk_dim > 0).then(|| {
        (0..spec.spk_dim)
            .map(|d| {
                let offset = if impostor {
                    spec.speaker_shift.at(d)
                } else {
                    0.0
                };
                spec.speaker_mean[d] + offset + spec.speaker_variance.sqrt() * normal(&mut rng)
            })
            .collect()
    });

    UtteranceFeatures {
        utterance_id: format!("{}-{index:05}", group.prefix()),
        speaker_id: spec.speaker_id.clone(),
        label: if impostor {
            Label::Spoof
        } else {
            Label::Bonafide
        },
        frame_rate_hz: spec.frame_rate_hz,
        frames,
        phoneme_intervals: intervals,
        speaker_embedding,
    }
}

/// Returns `(enrollment, test)` manifests. The test manifest lists the
/// genuine utterances first, then the spoofs.
pub fn generate(
    spec: &SynthSpec,
    n_enroll: usize,
    n_genuine_test: usize,
    n_spoof_test: usize,
) -> Result<(Vec<UtteranceFeatures>, Vec<UtteranceFeatures>)> {
    spec.validate()?;
    let batch = |group: Group, n: usize| -> Vec<UtteranceFeatures> {
        (0..n)
            .into_par_iter()
            .map(|i| generate_one(spec, group, i))
            .collect()
    };
    let enroll = batch(Group::Enroll, n_enroll);
    let mut test = batch(Group::Genuine, n_genuine_test);
    test.extend(batch(Group::Spoof, n_spoof_test));
    Ok((enroll, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_labels() {
        let spec = SynthSpec::standard(5, 3, 2, 1.0, 7);
        let (enroll, test) = generate(&spec, 4, 3, 2).unwrap();
        assert_eq!(enroll.len(), 4);
        assert!(enroll.iter().all(|u| u.label == Label::Bonafide));
        assert_eq!(
            test.iter().filter(|u| u.label == Label::Bonafide).count(),
            3
        );
        assert_eq!(test.iter().filter(|u| u.label == Label::Spoof).count(), 2);
        for u in enroll.iter().chain(&test) {
            u.validate().unwrap();
            assert_eq!(u.dim(), 3);
            assert_eq!(u.speaker_dim(), Some(2));
            for w in u.phoneme_intervals.windows(2) {
                assert_eq!(w[1].start, w[0].end + 1);
            }
        }
    }

    #[test]
    fn empty_enrollment() {
        let (enroll, _) = generate(&SynthSpec::default(), 0, 1, 1).unwrap();
        assert!(enroll.is_empty());
    }

    #[test]
    fn deterministic() {
        let spec = SynthSpec::standard(6, 2, 2, 1.0, 11);
        assert_eq!(
            generate(&spec, 5, 5, 5).unwrap(),
            generate(&spec, 5, 5, 5).unwrap()
        );
        let other = SynthSpec {
            rng_seed: 12,
            ..spec.clone()
        };
        assert_ne!(
            generate(&spec, 5, 0, 0).unwrap().0,
            generate(&other, 5, 0, 0).unwrap().0
        );
    }

    #[test]
    fn zero_jitter_pools_back_to_drawn_vector() {
        let mut spec = SynthSpec::standard(3, 2, 0, 0.0, 1);
        spec.frame_jitter = 0.0;
        let (enroll, _) = generate(&spec, 3, 0, 0).unwrap();
        for u in &enroll {
            for (iv, pv) in u.phoneme_intervals.iter().zip(u.pool_phoneme_vectors()) {
                assert_eq!(pv.vector, u.frames[iv.start]);
            }
        }
    }

    #[test]
    fn shift_mask_is_respected() {
        let mut spec = SynthSpec::standard(2, 1, 0, 1000.0, 3);
        spec.phonemes[0].label = "a".into();
        spec.phonemes[1].label = "i".into();
        spec.shifted_phonemes = Some(vec!["a".into()]);
        let (_, test) = generate(&spec, 0, 0, 20).unwrap();
        for u in &test {
            for pv in u.pool_phoneme_vectors() {
                let far = pv.vector[0] > 500.0;
                assert_eq!(far, pv.phoneme_label == "a");
            }
        }
    }

    #[test]
    fn invalid_specs() {
        let s = SynthSpec {
            utterance_length_range: (5, 2),
            ..SynthSpec::default()
        };
        assert!(generate(&s, 1, 1, 1).is_err());
        let mut s = SynthSpec::default();
        s.phonemes.clear();
        assert!(s.validate().is_err());
        let mut s = SynthSpec::default();
        s.phonemes[0].variances[0][0] = 0.0;
        assert!(s.validate().is_err());
        let s = SynthSpec {
            impostor_shift: Shift::Vector(vec![1.0]),
            ..SynthSpec::default()
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let s = SynthSpec::standard(3, 2, 2, 0.5, 4);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<SynthSpec>(&json).unwrap(), s);
        let partial: SynthSpec = serde_json::from_str(r#"{"rng_seed": 5}"#).unwrap();
        assert_eq!(partial.rng_seed, 5);
        assert_eq!(partial.phonemes.len(), 40);
    }
}
