use proptest::prelude::*;
use pvp_core::gmm::{fit, fit_with_report};
use pvp_core::{Config, DiagonalGmm};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn cloud(seed: u64, n: usize, dim: usize, centres: &[f64]) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let c = centres[i % centres.len()];
            (0..dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    c + z
                })
                .collect()
        })
        .collect()
}

#[test]
fn one_dimensional_density_integrates_to_one() {
    let samples = cloud(4, 300, 1, &[-2.0, 1.5, 4.0]);
    let g = fit(&samples, 3, &Config::default()).unwrap();
    let (lo, hi, steps) = (-40.0, 40.0, 400_000);
    let h = (hi - lo) / steps as f64;
    let total: f64 = (0..=steps)
        .map(|i| {
            let x = lo + i as f64 * h;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            w * g.log_density(&[x]).unwrap().exp()
        })
        .sum::<f64>()
        * h;
    assert!((total - 1.0).abs() < 1e-6, "integral {total}");
}

#[test]
fn fits_are_bit_reproducible() {
    let samples = cloud(9, 400, 6, &[0.0, 3.0]);
    let config = Config::default();
    let a = fit(&samples, 4, &config).unwrap();
    let b = fit(&samples, 4, &config).unwrap();
    assert_eq!(a, b);
}

#[test]
fn fitted_variances_respect_the_floor() {
    let mut samples = vec![vec![1.0, 2.0]; 50];
    samples.extend(cloud(2, 50, 2, &[5.0]));
    let config = Config::default();
    let g = fit(&samples, 3, &config).unwrap();
    g.validate(config.covariance_regularization).unwrap();
    assert!(g
        .variances()
        .iter()
        .flatten()
        .all(|&v| v >= config.covariance_regularization));
}

#[test]
fn closed_form_two_component_density() {
    let g = DiagonalGmm::new(
        vec![0.25, 0.75],
        vec![vec![0.0], vec![2.0]],
        vec![vec![1.0], vec![4.0]],
        0.0,
    )
    .unwrap();
    let x = 0.7f64;
    let n = |m: f64, v: f64| {
        (-(x - m).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
    };
    let expected = (0.25 * n(0.0, 1.0) + 0.75 * n(2.0, 4.0)).ln();
    assert!((g.log_density(&[x]).unwrap() - expected).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn log_likelihood_never_decreases(seed in 0u64..1000, k in 1usize..5, dim in 1usize..5) {
        let samples = cloud(seed, 120, dim, &[-3.0, 0.0, 2.5]);
        let report = fit_with_report(&samples, k, &Config::default()).unwrap();
        for (i, w) in report.log_likelihood_trace.windows(2).enumerate() {
            if !report.reseed_iterations.contains(&(i + 1)) {
                prop_assert!(w[1] >= w[0] - 1e-9, "step {i}: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn translation_moves_means_only(seed in 0u64..1000, shift in -50.0f64..50.0) {
        let samples = cloud(seed, 90, 3, &[-2.0, 2.0]);
        let moved: Vec<Vec<f64>> = samples
            .iter()
            .map(|v| v.iter().map(|x| x + shift).collect())
            .collect();
        let config = Config::default();
        let a = fit(&samples, 2, &config).unwrap();
        let b = fit(&moved, 2, &config).unwrap();
        for k in 0..a.components() {
            prop_assert!((a.weights()[k] - b.weights()[k]).abs() < 1e-6);
            for d in 0..3 {
                prop_assert!((a.means()[k][d] + shift - b.means()[k][d]).abs() < 1e-6);
                prop_assert!((a.variances()[k][d] - b.variances()[k][d]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn weights_sum_to_one(seed in 0u64..1000, k in 1usize..6) {
        let samples = cloud(seed, 60, 2, &[0.0, 4.0]);
        let g = fit(&samples, k, &Config::default()).unwrap();
        prop_assert!((g.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(g.components() <= k);
    }
}
