//! Speaker profiles: per-phoneme mixtures, reliability weights, salient
//! phoneme selection, broad-class fallback models and the global speaker
//! model, plus the versioned profile file.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::features::{Label, UtteranceFeatures};
use crate::gmm::{self, DiagonalGmm};
use crate::phonetics::{broad_class, BroadClass};

pub const PROFILE_SCHEMA: &str = "pvp-profile/1";

/// Model of one phoneme type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhonemeModel {
    pub phoneme_label: String,
    pub model: DiagonalGmm,
    pub sample_count: usize,
    /// Mean log-density of the model over its own reference vectors.
    pub mean_log_likelihood: f64,
    /// `exp(mean_log_likelihood / weight_scale)`.
    pub reliability_weight: f64,
}

/// Fallback model over all reference vectors of one broad phonetic class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassModel {
    pub class: BroadClass,
    pub model: DiagonalGmm,
    pub sample_count: usize,
    pub mean_log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeakerProfile {
    pub speaker_id: String,
    pub phoneme_models: BTreeMap<String, PhonemeModel>,
    /// Most reliable phonemes, best first.
    pub salient_phonemes: Vec<String>,
    pub class_models: BTreeMap<BroadClass, ClassModel>,
    pub speaker_model: Option<DiagonalGmm>,
    pub config: Config,
    pub embedding_dim: usize,
    pub speaker_embedding_dim: Option<usize>,
}

/// Number of mixture components for a phoneme with `samples` reference
/// vectors: one per `adaptive_samples_per_component`, at least one, at most
/// `phoneme_components_max`.
pub fn adaptive_components(samples: usize, config: &Config) -> usize {
    (samples / config.adaptive_samples_per_component)
        .max(1)
        .min(config.phoneme_components_max)
}

pub fn reliability_weight(mean_log_likelihood: f64, weight_scale: f64) -> f64 {
    (mean_log_likelihood / weight_scale).exp()
}

fn fit_group(vectors: &[Vec<f64>], config: &Config) -> Result<(DiagonalGmm, f64)> {
    let model = gmm::fit(vectors, adaptive_components(vectors.len(), config), config)?;
    let mean_ll = model.mean_log_likelihood(vectors)?;
    Ok((model, mean_ll))
}

/// Builds a profile from bona fide (or unlabelled) reference utterances of
/// a single speaker.
pub fn build_profile(reference: &[UtteranceFeatures], config: &Config) -> Result<SpeakerProfile> {
    config.validate()?;
    let Some(first) = reference.first() else {
        return Err(Error::InvalidInput("empty reference set".into()));
    };
    let dim = first.dim();
    let mut spk_dim = None;
    for u in reference {
        u.validate()
            .map_err(|m| Error::InvalidInput(format!("utterance '{}': {m}", u.utterance_id)))?;
        if u.speaker_id != first.speaker_id {
            return Err(Error::InvalidInput(format!(
                "mixed speaker ids in reference set: '{}' and '{}'",
                first.speaker_id, u.speaker_id
            )));
        }
        if u.label == Label::Spoof {
            return Err(Error::InvalidInput(format!(
                "reference utterance '{}' is labelled spoof",
                u.utterance_id
            )));
        }
        if u.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: u.dim(),
            });
        }
        if let Some(d) = u.speaker_dim() {
            match spk_dim {
                None => spk_dim = Some(d),
                Some(e) if e != d => {
                    return Err(Error::DimensionMismatch {
                        expected: e,
                        found: d,
                    })
                }
                _ => {}
            }
        }
    }

    let mut by_phoneme: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for u in reference {
        for pv in u.pool_phoneme_vectors() {
            by_phoneme
                .entry(pv.phoneme_label)
                .or_default()
                .push(pv.vector);
        }
    }
    if by_phoneme.is_empty() {
        return Err(Error::InvalidInput(
            "reference set contains no phoneme intervals".into(),
        ));
    }
    let mut by_class: BTreeMap<BroadClass, Vec<Vec<f64>>> = BTreeMap::new();
    for (label, vectors) in &by_phoneme {
        by_class
            .entry(broad_class(label))
            .or_default()
            .extend(vectors.iter().cloned());
    }

    let phoneme_models: BTreeMap<String, PhonemeModel> = by_phoneme
        .par_iter()
        .filter(|(_, v)| v.len() >= config.min_phoneme_samples)
        .map(|(label, vectors)| {
            let (model, mean_ll) = fit_group(vectors, config)?;
            Ok((
                label.clone(),
                PhonemeModel {
                    phoneme_label: label.clone(),
                    model,
                    sample_count: vectors.len(),
                    mean_log_likelihood: mean_ll,
                    reliability_weight: reliability_weight(mean_ll, config.weight_scale),
                },
            ))
        })
        .collect::<Result<_>>()?;

    let class_models: BTreeMap<BroadClass, ClassModel> = by_class
        .par_iter()
        .filter(|(_, v)| v.len() >= config.min_phoneme_samples)
        .map(|(class, vectors)| {
            let (model, mean_ll) = fit_group(vectors, config)?;
            Ok((
                *class,
                ClassModel {
                    class: *class,
                    model,
                    sample_count: vectors.len(),
                    mean_log_likelihood: mean_ll,
                },
            ))
        })
        .collect::<Result<_>>()?;

    if phoneme_models.is_empty() && class_models.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no phoneme or broad class reaches {} reference instances",
            config.min_phoneme_samples
        )));
    }

    let embeddings: Vec<&Vec<f64>> = reference
        .iter()
        .filter_map(|u| u.speaker_embedding.as_ref())
        .collect();
    let speaker_model = if embeddings.len() >= config.min_phoneme_samples {
        Some(gmm::fit(&embeddings, config.speaker_components, config)?)
    } else {
        None
    };

    let salient_phonemes = select_salient(&phoneme_models, config.salient_count);

    Ok(SpeakerProfile {
        speaker_id: first.speaker_id.clone(),
        phoneme_models,
        salient_phonemes,
        class_models,
        speaker_model,
        config: config.clone(),
        embedding_dim: dim,
        speaker_embedding_dim: spk_dim,
    })
}

// Descending weight; the mean log-likelihood breaks ties the exponential
// may have rounded together, then the label.
fn salient_order(a: &PhonemeModel, b: &PhonemeModel) -> std::cmp::Ordering {
    b.reliability_weight
        .total_cmp(&a.reliability_weight)
        .then(b.mean_log_likelihood.total_cmp(&a.mean_log_likelihood))
        .then_with(|| a.phoneme_label.cmp(&b.phoneme_label))
}

fn select_salient(models: &BTreeMap<String, PhonemeModel>, k: usize) -> Vec<String> {
    let mut ranked: Vec<&PhonemeModel> = models.values().collect();
    ranked.sort_by(|a, b| salient_order(a, b));
    ranked
        .into_iter()
        .take(k)
        .map(|m| m.phoneme_label.clone())
        .collect()
}

/// One row of the per-phoneme profile summary.
#[derive(Debug, Clone, PartialEq)]
pub struct PhonemeSummary {
    pub phoneme_label: String,
    pub sample_count: usize,
    pub components: usize,
    pub mean_log_likelihood: f64,
    pub reliability_weight: f64,
    pub salient: bool,
}

impl SpeakerProfile {
    pub fn is_salient(&self, label: &str) -> bool {
        self.salient_phonemes.iter().any(|s| s == label)
    }

    pub fn summary(&self) -> Vec<PhonemeSummary> {
        self.phoneme_models
            .values()
            .map(|m| PhonemeSummary {
                phoneme_label: m.phoneme_label.clone(),
                sample_count: m.sample_count,
                components: m.model.components(),
                mean_log_likelihood: m.mean_log_likelihood,
                reliability_weight: m.reliability_weight,
                salient: self.is_salient(&m.phoneme_label),
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidProfile(m));
        self.config
            .validate()
            .map_err(|e| Error::InvalidProfile(e.to_string()))?;
        let floor = self.config.covariance_regularization;
        if self.embedding_dim == 0 {
            return bad("embedding_dim must be positive".into());
        }
        for (label, m) in &self.phoneme_models {
            if label != &m.phoneme_label {
                return bad(format!(
                    "phoneme model key '{label}' names '{}'",
                    m.phoneme_label
                ));
            }
            m.model.validate(floor)?;
            if m.model.dim() != self.embedding_dim {
                return bad(format!("phoneme model '{label}' has wrong dimension"));
            }
            if m.sample_count < self.config.min_phoneme_samples {
                return bad(format!("phoneme model '{label}' has too few samples"));
            }
            let expected = reliability_weight(m.mean_log_likelihood, self.config.weight_scale);
            if !m.mean_log_likelihood.is_finite()
                || (m.reliability_weight - expected).abs() > 1e-12 * expected.abs()
            {
                return bad(format!(
                    "phoneme model '{label}' weight disagrees with its mean log-likelihood"
                ));
            }
        }
        for (class, m) in &self.class_models {
            if *class != m.class {
                return bad(format!("class model key '{class}' names '{}'", m.class));
            }
            m.model.validate(floor)?;
            if m.model.dim() != self.embedding_dim {
                return bad(format!("class model '{class}' has wrong dimension"));
            }
        }
        if let Some(spk) = &self.speaker_model {
            spk.validate(floor)?;
            if Some(spk.dim()) != self.speaker_embedding_dim {
                return bad("speaker model dimension disagrees with speaker_embedding_dim".into());
            }
        }
        if self.salient_phonemes.len() > self.config.salient_count {
            return bad("more salient phonemes than salient_count".into());
        }
        let mut prev: Option<&PhonemeModel> = None;
        for label in &self.salient_phonemes {
            let Some(m) = self.phoneme_models.get(label) else {
                return bad(format!("salient phoneme '{label}' has no model"));
            };
            if let Some(p) = prev {
                if salient_order(p, m) != std::cmp::Ordering::Less {
                    return bad("salient phonemes are not in descending weight order".into());
                }
            }
            prev = Some(m);
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct ProfileDocument<'a> {
    schema: &'static str,
    #[serde(flatten)]
    profile: &'a SpeakerProfile,
}

pub fn profile_to_json(profile: &SpeakerProfile) -> Result<String> {
    serde_json::to_string(&ProfileDocument {
        schema: PROFILE_SCHEMA,
        profile,
    })
    .map_err(|e| Error::InvalidProfile(e.to_string()))
}

pub fn profile_from_json(text: &str) -> Result<SpeakerProfile> {
    let mut value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::malformed(e.line(), e.to_string()))?;
    let schema = value
        .as_object_mut()
        .and_then(|o| o.remove("schema"))
        .ok_or_else(|| Error::InvalidProfile("missing schema tag".into()))?;
    if schema.as_str() != Some(PROFILE_SCHEMA) {
        return Err(Error::Schema {
            expected: PROFILE_SCHEMA.into(),
            found: schema.to_string(),
        });
    }
    let profile: SpeakerProfile =
        serde_json::from_value(value).map_err(|e| Error::InvalidProfile(e.to_string()))?;
    profile.validate()?;
    Ok(profile)
}

pub fn save_profile(profile: &SpeakerProfile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = profile_to_json(profile)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(json.as_bytes())
        .and_then(|_| w.write_all(b"\n"))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_profile(path: impl AsRef<Path>) -> Result<SpeakerProfile> {
    let path = path.as_ref();
    let mut text = String::new();
    std::io::Read::read_to_string(
        &mut BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?),
        &mut text,
    )
    .map_err(|e| Error::io(path, e))?;
    profile_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::PhonemeInterval;

    fn utterance(id: &str, phonemes: &[(&str, f64)]) -> UtteranceFeatures {
        UtteranceFeatures {
            utterance_id: id.into(),
            speaker_id: "poi".into(),
            label: Label::Bonafide,
            frame_rate_hz: 50.0,
            frames: phonemes.iter().map(|(_, v)| vec![*v, -*v]).collect(),
            phoneme_intervals: phonemes
                .iter()
                .enumerate()
                .map(|(i, (l, _))| PhonemeInterval::new(*l, i, i))
                .collect(),
            speaker_embedding: None,
        }
    }

    #[test]
    fn adaptive_component_rule() {
        let c = Config::default();
        assert_eq!(adaptive_components(7, &c), 1);
        assert_eq!(adaptive_components(3, &c), 1);
        assert_eq!(adaptive_components(25, &c), 2);
        assert_eq!(adaptive_components(1000, &c), 5);
    }

    #[test]
    fn rare_phoneme_feeds_only_its_class() {
        let mut utts = Vec::new();
        for i in 0..10 {
            let x = i as f64 * 0.1;
            let mut ph = vec![("a", x), ("e", 1.0 + x)];
            if i < 2 {
                ph.push(("o", 2.0 + x));
            }
            utts.push(utterance(&format!("u{i}"), &ph));
        }
        let p = build_profile(&utts, &Config::default()).unwrap();
        assert!(p.phoneme_models.contains_key("a"));
        assert!(!p.phoneme_models.contains_key("o"));
        assert_eq!(p.class_models[&BroadClass::Vowel].sample_count, 22);
        assert!(p.speaker_model.is_none());
        p.validate().unwrap();
    }

    #[test]
    fn build_errors() {
        let c = Config::default();
        assert!(build_profile(&[], &c).is_err());
        let a = utterance("a", &[("a", 1.0)]);
        let mut b = utterance("b", &[("a", 1.0)]);
        b.speaker_id = "other".into();
        assert!(build_profile(&[a.clone(), b], &c).is_err());
        let mut s = utterance("s", &[("a", 1.0)]);
        s.label = Label::Spoof;
        assert!(build_profile(&[a.clone(), s], &c).is_err());
        // two instances: below every threshold
        let b = utterance("b", &[("a", 2.0)]);
        assert!(build_profile(&[a, b], &c).is_err());
        let silent = UtteranceFeatures {
            phoneme_intervals: vec![],
            ..utterance("z", &[("a", 1.0)])
        };
        assert!(build_profile(&[silent], &c).is_err());
    }

    #[test]
    fn tampered_weights_fail_to_load() {
        let utts: Vec<_> = (0..12)
            .map(|i| utterance(&format!("u{i}"), &[("a", i as f64), ("p", (i * i) as f64)]))
            .collect();
        let p = build_profile(&utts, &Config::default()).unwrap();
        let json = profile_to_json(&p).unwrap();
        assert_eq!(profile_from_json(&json).unwrap(), p);

        let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
        v["phoneme_models"]["a"]["model"]["weights"][0] = serde_json::json!(0.25);
        assert!(matches!(
            profile_from_json(&v.to_string()),
            Err(Error::InvalidProfile(_))
        ));

        let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
        v["schema"] = serde_json::json!("pvp-profile/2");
        assert!(matches!(
            profile_from_json(&v.to_string()),
            Err(Error::Schema { .. })
        ));

        let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
        v["salient_phonemes"] = serde_json::json!(["zz"]);
        assert!(profile_from_json(&v.to_string()).is_err());
    }
}
