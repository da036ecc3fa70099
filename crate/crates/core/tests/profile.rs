use pvp_core::profile::adaptive_components;
use pvp_core::{build_profile, Config, Label, PhonemeInterval, UtteranceFeatures};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Utterances with one "a" and one "b" instance each: "a" sits in a tight
/// cluster, "b" is scattered.
fn two_phoneme_enrollment(n: usize) -> Vec<UtteranceFeatures> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let tight = Normal::new(1.0, 0.05).unwrap();
    let loose = Normal::new(-1.0, 3.0).unwrap();
    (0..n)
        .map(|i| {
            let a: Vec<f64> = (0..4).map(|_| tight.sample(&mut rng)).collect();
            let b: Vec<f64> = (0..4).map(|_| loose.sample(&mut rng)).collect();
            UtteranceFeatures {
                utterance_id: format!("u{i}"),
                speaker_id: "poi".into(),
                label: Label::Bonafide,
                frame_rate_hz: 50.0,
                frames: vec![a.clone(), a, b.clone(), b],
                phoneme_intervals: vec![
                    PhonemeInterval::new("a", 0, 1),
                    PhonemeInterval::new("b", 2, 3),
                ],
                speaker_embedding: None,
            }
        })
        .collect()
}

#[test]
fn tight_phoneme_outranks_scattered_one() {
    let config = Config {
        salient_count: 1,
        ..Config::default()
    };
    let profile = build_profile(&two_phoneme_enrollment(60), &config).unwrap();
    assert_eq!(profile.salient_phonemes, vec!["a".to_string()]);
    let a = &profile.phoneme_models["a"];
    let b = &profile.phoneme_models["b"];
    assert!(a.mean_log_likelihood > b.mean_log_likelihood);
    assert!(a.reliability_weight > b.reliability_weight);
    assert!(profile.speaker_model.is_none());
}

#[test]
fn stored_mean_log_likelihood_is_reproducible() {
    let enroll = two_phoneme_enrollment(40);
    let profile = build_profile(&enroll, &Config::default()).unwrap();
    for (label, pm) in &profile.phoneme_models {
        let vectors: Vec<Vec<f64>> = enroll
            .iter()
            .flat_map(|u| u.pool_phoneme_vectors())
            .filter(|v| &v.phoneme_label == label)
            .map(|v| v.vector)
            .collect();
        assert_eq!(vectors.len(), pm.sample_count);
        let recomputed = vectors
            .iter()
            .map(|v| pm.model.log_density(v).unwrap())
            .sum::<f64>()
            / vectors.len() as f64;
        assert!((recomputed - pm.mean_log_likelihood).abs() < 1e-9);
        assert_eq!(
            pm.model.components(),
            adaptive_components(pm.sample_count, &profile.config)
        );
    }
}

#[test]
fn adaptive_component_rule() {
    let c = Config::default();
    assert_eq!(adaptive_components(3, &c), 1);
    assert_eq!(adaptive_components(19, &c), 1);
    assert_eq!(adaptive_components(20, &c), 2);
    assert_eq!(adaptive_components(49, &c), 4);
    assert_eq!(adaptive_components(5000, &c), 5);
}

#[test]
fn sparse_phonemes_are_not_modelled() {
    let mut enroll = two_phoneme_enrollment(10);
    let extra = enroll[0].frames[0].clone();
    enroll[0].frames.push(extra);
    enroll[0]
        .phoneme_intervals
        .push(PhonemeInterval::new("z", 4, 4));
    let profile = build_profile(&enroll, &Config::default()).unwrap();
    assert!(!profile.phoneme_models.contains_key("z"));
}
