//! Diagonal-covariance Gaussian mixtures: log-domain density evaluation and
//! maximum-likelihood fitting by expectation-maximization.

use std::cmp::Ordering;
use std::f64::consts::TAU;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};

/// Responsibility mass below which a component counts as empty.
const EMPTY_COMPONENT_MASS: f64 = 1e-10;

/// Numerically stable `ln(sum(exp(xs)))`. Returns `-inf` for an empty slice
/// or when every term is `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// A mixture of `K` Gaussians with diagonal covariances over `D` dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalGmm {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

impl DiagonalGmm {
    /// Builds a model after checking shapes, finiteness, the weight simplex
    /// (within `1e-12`) and the variance floor.
    pub fn new(
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        variances: Vec<Vec<f64>>,
        variance_floor: f64,
    ) -> Result<Self> {
        let model = DiagonalGmm {
            weights,
            means,
            variances,
        };
        model.validate(variance_floor)?;
        Ok(model)
    }

    pub fn validate(&self, variance_floor: f64) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidProfile(m));
        let k = self.weights.len();
        if k == 0 {
            return bad("mixture has no components".into());
        }
        if self.means.len() != k || self.variances.len() != k {
            return bad(format!(
                "mixture has {k} weights but {} means and {} variance rows",
                self.means.len(),
                self.variances.len()
            ));
        }
        let d = self.means[0].len();
        if d == 0 {
            return bad("mixture dimension must be at least 1".into());
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return bad("mixture weights must be finite and nonnegative".into());
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return bad(format!("mixture weights sum to {total}, expected 1"));
        }
        for (mean, var) in self.means.iter().zip(&self.variances) {
            if mean.len() != d || var.len() != d {
                return bad("inconsistent component dimensions".into());
            }
            if mean.iter().any(|v| !v.is_finite()) {
                return bad("non-finite component mean".into());
            }
            if var.iter().any(|v| !v.is_finite() || *v < variance_floor) {
                return bad(format!(
                    "component variance below the floor {variance_floor} or non-finite"
                ));
            }
        }
        Ok(())
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn variances(&self) -> &[Vec<f64>] {
        &self.variances
    }

    /// `ln p(v)` for the mixture, evaluated with log-sum-exp.
    pub fn log_density(&self, v: &[f64]) -> Result<f64> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite input vector".into()));
        }
        Ok(self.log_density_unchecked(v))
    }

    pub(crate) fn log_density_unchecked(&self, v: &[f64]) -> f64 {
        let terms: Vec<f64> = (0..self.components())
            .map(|k| self.weights[k].ln() + self.component_log_normal(k, v))
            .collect();
        log_sum_exp(&terms)
    }

    fn component_log_normal(&self, k: usize, v: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((x, mu), var) in v.iter().zip(&self.means[k]).zip(&self.variances[k]) {
            let diff = x - mu;
            acc += (TAU * var).ln() + diff * diff / var;
        }
        -0.5 * acc
    }

    /// Mean of `log_density` over a sample set.
    pub fn mean_log_likelihood<S: AsRef<[f64]>>(&self, samples: &[S]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("empty sample set".into()));
        }
        let mut total = 0.0;
        for s in samples {
            total += self.log_density(s.as_ref())?;
        }
        Ok(total / samples.len() as f64)
    }
}

/// Outcome of an EM run, including the per-iteration training
/// log-likelihood trace (one entry per E-step).
#[derive(Debug, Clone)]
pub struct FitReport {
    pub model: DiagonalGmm,
    pub log_likelihood_trace: Vec<f64>,
    pub converged: bool,
    /// Indices into `log_likelihood_trace` of E-steps that followed a
    /// component reseed; monotonicity is not expected across those.
    pub reseed_iterations: Vec<usize>,
}

/// Fits a diagonal GMM by EM. See [`fit_with_report`].
pub fn fit<S: AsRef<[f64]>>(
    samples: &[S],
    components: usize,
    config: &Config,
) -> Result<DiagonalGmm> {
    fit_with_report(samples, components, config).map(|r| r.model)
}

/// Fits a diagonal GMM with `min(components, distinct samples)` components.
///
/// Centres are seeded with k-means++ from a ChaCha8 stream keyed by
/// `config.rng_seed`; initial weights are uniform and initial variances are
/// the per-cluster biased variances plus the regularization term. Each
/// M-step adds `config.covariance_regularization` to the variance estimate.
pub fn fit_with_report<S: AsRef<[f64]>>(
    samples: &[S],
    components: usize,
    config: &Config,
) -> Result<FitReport> {
    let data = check_samples(samples)?;
    if components == 0 {
        return Err(Error::InvalidInput(
            "component count must be positive".into(),
        ));
    }
    let reg = config.covariance_regularization;
    let k = components.min(count_distinct(&data));
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);

    let centres = kmeans_plus_plus(&data, k, &mut rng);
    let mut model = initial_model(&data, centres, reg);
    let global_var = column_variance(&data, None);

    let n = data.len();
    let mut trace = Vec::new();
    let mut reseeds = Vec::new();
    let mut converged = false;
    let mut resp = vec![vec![0.0; k]; n];
    let mut sample_log_density = vec![0.0; n];

    for iter in 0..=config.em_max_iterations {
        let ll = e_step(&model, &data, &mut resp, &mut sample_log_density);
        trace.push(ll);
        if let Some(&prev) = trace.iter().rev().nth(1) {
            if !reseeds.contains(&iter) && ll - prev <= config.em_tolerance * prev.abs() {
                converged = true;
                break;
            }
        }
        if iter == config.em_max_iterations {
            break;
        }
        if m_step(
            &mut model,
            &data,
            &resp,
            &sample_log_density,
            &global_var,
            reg,
        ) {
            reseeds.push(iter + 1);
        }
    }

    Ok(FitReport {
        model,
        log_likelihood_trace: trace,
        converged,
        reseed_iterations: reseeds,
    })
}

fn check_samples<S: AsRef<[f64]>>(samples: &[S]) -> Result<Vec<&[f64]>> {
    let Some(first) = samples.first() else {
        return Err(Error::InvalidInput("empty sample set".into()));
    };
    let d = first.as_ref().len();
    if d == 0 {
        return Err(Error::InvalidInput(
            "samples must have at least one dimension".into(),
        ));
    }
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        let s = s.as_ref();
        if s.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: s.len(),
            });
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite sample value".into()));
        }
        out.push(s);
    }
    Ok(out)
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

fn count_distinct(data: &[&[f64]]) -> usize {
    let mut sorted = data.to_vec();
    sorted.sort_by(|a, b| lexicographic(a, b));
    sorted.dedup_by(|a, b| a == b);
    sorted.len()
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_plus_plus(data: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centres = vec![data[rng.random_range(0..data.len())].to_vec()];
    let mut nearest: Vec<f64> = data
        .iter()
        .map(|x| squared_distance(x, &centres[0]))
        .collect();
    while centres.len() < k {
        // k never exceeds the number of distinct samples, so some distance is positive.
        let sampler = WeightedIndex::new(&nearest).expect("positive D^2 mass");
        let next = data[sampler.sample(rng)].to_vec();
        for (d2, x) in nearest.iter_mut().zip(data) {
            *d2 = d2.min(squared_distance(x, &next));
        }
        centres.push(next);
    }
    centres
}

fn nearest_centre(x: &[f64], centres: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centres.iter().enumerate() {
        let d = squared_distance(x, c);
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

/// Biased per-dimension variance of `data`, optionally restricted to `rows`.
fn column_variance(data: &[&[f64]], rows: Option<&[usize]>) -> Vec<f64> {
    let all: Vec<usize>;
    let rows = match rows {
        Some(r) => r,
        None => {
            all = (0..data.len()).collect();
            &all
        }
    };
    let d = data[0].len();
    if rows.is_empty() {
        return vec![0.0; d];
    }
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for &i in rows {
        for (m, v) in mean.iter_mut().zip(data[i]) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for &i in rows {
        for ((s, v), m) in var.iter_mut().zip(data[i]).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= n);
    var
}

fn initial_model(data: &[&[f64]], centres: Vec<Vec<f64>>, reg: f64) -> DiagonalGmm {
    let k = centres.len();
    let mut members = vec![Vec::new(); k];
    for (i, x) in data.iter().enumerate() {
        members[nearest_centre(x, &centres)].push(i);
    }
    let variances = members
        .iter()
        .map(|rows| {
            column_variance(data, Some(rows))
                .into_iter()
                .map(|v| (v + reg).max(reg))
                .collect()
        })
        .collect();
    DiagonalGmm {
        weights: vec![1.0 / k as f64; k],
        means: centres,
        variances,
    }
}

/// Fills responsibilities and per-sample log densities; returns the total
/// log-likelihood.
fn e_step(
    model: &DiagonalGmm,
    data: &[&[f64]],
    resp: &mut [Vec<f64>],
    sample_log_density: &mut [f64],
) -> f64 {
    let k = model.components();
    let log_weights: Vec<f64> = model.weights.iter().map(|w| w.ln()).collect();
    let mut terms = vec![0.0; k];
    let mut total = 0.0;
    for ((x, r), ld) in data
        .iter()
        .zip(resp.iter_mut())
        .zip(sample_log_density.iter_mut())
    {
        for (j, t) in terms.iter_mut().enumerate() {
            *t = log_weights[j] + model.component_log_normal(j, x);
        }
        let lse = log_sum_exp(&terms);
        for (rj, t) in r.iter_mut().zip(&terms) {
            *rj = (t - lse).exp();
        }
        *ld = lse;
        total += lse;
    }
    total
}

/// Updates parameters in place; returns whether any component was reseeded.
fn m_step(
    model: &mut DiagonalGmm,
    data: &[&[f64]],
    resp: &[Vec<f64>],
    sample_log_density: &[f64],
    global_var: &[f64],
    reg: f64,
) -> bool {
    let k = model.components();
    let d = data[0].len();
    let n = data.len();
    let mut mass = vec![0.0; k];
    for r in resp {
        for (m, rj) in mass.iter_mut().zip(r) {
            *m += rj;
        }
    }
    let mut reseeded = false;
    let mut taken = Vec::new();
    for j in 0..k {
        if mass[j] < EMPTY_COMPONENT_MASS {
            let worst = (0..n)
                .filter(|i| !taken.contains(i))
                .min_by(|&a, &b| sample_log_density[a].total_cmp(&sample_log_density[b]))
                .unwrap_or(0);
            taken.push(worst);
            model.means[j] = data[worst].to_vec();
            model.variances[j] = global_var.iter().map(|v| (v + reg).max(reg)).collect();
            mass[j] = 1.0;
            reseeded = true;
            continue;
        }
        let mut mean = vec![0.0; d];
        for (x, r) in data.iter().zip(resp) {
            for (m, v) in mean.iter_mut().zip(*x) {
                *m += r[j] * v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= mass[j]);
        let mut var = vec![0.0; d];
        for (x, r) in data.iter().zip(resp) {
            for ((s, v), m) in var.iter_mut().zip(*x).zip(&mean) {
                *s += r[j] * (v - m) * (v - m);
            }
        }
        var.iter_mut()
            .for_each(|s| *s = (*s / mass[j] + reg).max(reg));
        model.means[j] = mean;
        model.variances[j] = var;
    }
    let total: f64 = mass.iter().sum();
    model.weights = mass.iter().map(|m| m / total).collect();
    reseeded
}
