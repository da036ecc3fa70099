//! Engine hyperparameters.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters for profiling and scoring.
///
/// Defaults follow the published operating point: five components per
/// phoneme model and for the speaker model, a `1e-3` variance floor, twelve
/// salient phonemes, a logistic normalization centred at `-2000` with scale
/// `200`, and a phoneme/speaker fusion weight of `0.8`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Upper bound on mixture components per phoneme model.
    pub phoneme_components_max: usize,
    /// Mixture components of the global speaker-embedding model.
    pub speaker_components: usize,
    /// Additive per-dimension variance floor.
    pub covariance_regularization: f64,
    /// Number of salient phonemes retained in a profile.
    pub salient_count: usize,
    /// Centre of the logistic likelihood normalization.
    pub sigmoid_center: f64,
    /// Scale of the logistic likelihood normalization.
    pub sigmoid_scale: f64,
    /// Weight of the phoneme score in the final fusion.
    pub fusion_alpha: f64,
    /// Divisor applied to the mean log-likelihood before exponentiation
    /// when computing phoneme reliability weights.
    pub weight_scale: f64,
    /// Phonemes with fewer reference instances get no dedicated model.
    pub min_phoneme_samples: usize,
    /// Reference samples required per additional mixture component.
    pub adaptive_samples_per_component: usize,
    pub em_max_iterations: usize,
    /// Relative log-likelihood improvement below which EM stops.
    pub em_tolerance: f64,
    pub rng_seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            phoneme_components_max: 5,
            speaker_components: 5,
            covariance_regularization: 1e-3,
            salient_count: 12,
            sigmoid_center: -2000.0,
            sigmoid_scale: 200.0,
            fusion_alpha: 0.8,
            weight_scale: 100.0,
            min_phoneme_samples: 3,
            adaptive_samples_per_component: 10,
            em_max_iterations: 100,
            em_tolerance: 1e-6,
            rng_seed: 0,
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        let positive_counts = [
            ("phoneme_components_max", self.phoneme_components_max),
            ("speaker_components", self.speaker_components),
            ("salient_count", self.salient_count),
            ("min_phoneme_samples", self.min_phoneme_samples),
            (
                "adaptive_samples_per_component",
                self.adaptive_samples_per_component,
            ),
            ("em_max_iterations", self.em_max_iterations),
        ];
        for (name, value) in positive_counts {
            if value == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        let positive_reals = [
            ("covariance_regularization", self.covariance_regularization),
            ("sigmoid_scale", self.sigmoid_scale),
            ("weight_scale", self.weight_scale),
            ("em_tolerance", self.em_tolerance),
        ];
        for (name, value) in positive_reals {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be a positive finite number, got {value}"
                )));
            }
        }
        if !self.sigmoid_center.is_finite() {
            return Err(Error::InvalidConfig("sigmoid_center must be finite".into()));
        }
        if !(0.0..=1.0).contains(&self.fusion_alpha) {
            return Err(Error::InvalidConfig(format!(
                "fusion_alpha must lie in [0, 1], got {}",
                self.fusion_alpha
            )));
        }
        Ok(())
    }

    /// Reads a (possibly partial) JSON config; missing fields take defaults.
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let config: Config = serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("config parse error: {e}")))?;
        config.validate()?;
        Ok(config)
    }
}
