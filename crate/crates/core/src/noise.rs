//! Covariate noise models and the TV budgets they imply.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::ObservedDataset;
use crate::error::{Error, Result};

/// Log-partition functions available to the exponential-tilting model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogPartition {
    /// `A(θ) = ‖θ‖²/2`: Gaussian with unit variance, natural parameter = mean.
    GaussianMean,
    /// `A(θ) = Σ ln(1 + e^θ_j)`.
    Bernoulli,
    /// `A(θ) = Σ e^θ_j`.
    Poisson,
}

impl LogPartition {
    pub fn value_and_grad(self, theta: &[f64]) -> (f64, Vec<f64>) {
        match self {
            LogPartition::GaussianMean => (0.5 * theta.iter().map(|t| t * t).sum::<f64>(), theta.to_vec()),
            LogPartition::Bernoulli => (
                theta.iter().map(|&t| crate::models::softplus(t)).sum(),
                theta.iter().map(|&t| crate::models::sigmoid(t)).collect(),
            ),
            LogPartition::Poisson => (theta.iter().map(|t| t.exp()).sum(), theta.iter().map(|t| t.exp()).collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseModel {
    /// `x̃ = x + N(mean, std²)` independently per covariate.
    GaussianAdditive { mean: f64, std: f64 },
    /// With probability `rate` a row's covariates are replaced by a draw from
    /// the contaminating Gaussian `N(mean, std²)` per covariate.
    Huber { rate: f64, mean: f64, std: f64 },
    /// Each covariate value `values[k]` is reported as `values[j]` with
    /// probability `flip[k][j]`.
    Misclassification { values: Vec<f64>, flip: Vec<Vec<f64>> },
    /// Noisy law obtained by moving the natural parameter from `theta` to
    /// `theta_tilde`; used for budgets only.
    ExponentialTilting { theta: Vec<f64>, theta_tilde: Vec<f64>, log_partition: LogPartition },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseModel::GaussianAdditive { mean, std } => {
                if !(*std > 0.0 && std.is_finite() && mean.is_finite()) {
                    return Err(Error::invalid(format!("gaussian noise needs std > 0, got {}", std)));
                }
            }
            NoiseModel::Huber { rate, mean, std } => {
                if !(0.0..=1.0).contains(rate) {
                    return Err(Error::invalid(format!("contamination rate {} outside [0, 1]", rate)));
                }
                if !(*std > 0.0 && std.is_finite() && mean.is_finite()) {
                    return Err(Error::invalid(format!("contaminating std {} must be positive", std)));
                }
            }
            NoiseModel::Misclassification { values, flip } => {
                if flip.len() != values.len() || flip.iter().any(|r| r.len() != values.len()) {
                    return Err(Error::dim("flip table must be square over the listed values"));
                }
                for (k, row) in flip.iter().enumerate() {
                    let s: f64 = row.iter().sum();
                    if row.iter().any(|p| !(*p >= 0.0)) || (s - 1.0).abs() > 1e-9 {
                        return Err(Error::invalid(format!("flip table row {} is not a distribution", k)));
                    }
                }
            }
            NoiseModel::ExponentialTilting { theta, theta_tilde, .. } => {
                if theta.len() != theta_tilde.len() {
                    return Err(Error::dim("natural parameters differ in length"));
                }
            }
        }
        Ok(())
    }
}

/// Replaces the covariates of `data` according to `model`; outcomes and
/// treatments are copied unchanged.
pub fn corrupt(data: &ObservedDataset, model: &NoiseModel, seed: u64) -> Result<ObservedDataset> {
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = data.dim();
    let mut x = data.covariates().to_vec();
    match model {
        NoiseModel::GaussianAdditive { mean, std } => {
            let normal = Normal::new(*mean, *std).map_err(|e| Error::invalid(e.to_string()))?;
            x.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
        }
        NoiseModel::Huber { rate, mean, std } => {
            let normal = Normal::new(*mean, *std).map_err(|e| Error::invalid(e.to_string()))?;
            for row in x.chunks_mut(d.max(1)) {
                if rng.random::<f64>() < *rate {
                    row.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
                }
            }
        }
        NoiseModel::Misclassification { values, flip } => {
            let samplers = flip
                .iter()
                .map(|row| WeightedIndex::new(row).map_err(|e| Error::invalid(e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            for v in x.iter_mut() {
                let k = values.iter().position(|c| c == v).ok_or_else(|| {
                    Error::invalid(format!("covariate value {} is not among the misclassification values", v))
                })?;
                *v = values[samplers[k].sample(&mut rng)];
            }
        }
        NoiseModel::ExponentialTilting { .. } => {
            return Err(Error::invalid("exponential tilting defines a budget, not a sampler"));
        }
    }
    data.with_covariates(d, x)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimate {
    /// Budget per treatment arm.
    pub gamma: [f64; 2],
    pub method: String,
    pub diagnostics: BTreeMap<String, f64>,
}

impl GammaEstimate {
    fn single(method: &str, gamma: f64) -> Self {
        Self { gamma: [gamma, gamma], method: method.into(), diagnostics: BTreeMap::new() }
    }

    /// Combines separate per-arm estimates of the same method.
    pub fn per_arm(arm0: GammaEstimate, arm1: GammaEstimate) -> Self {
        let mut diagnostics = BTreeMap::new();
        for (z, e) in [(0, &arm0), (1, &arm1)] {
            for (k, v) in &e.diagnostics {
                diagnostics.insert(format!("{}_z{}", k, z), *v);
            }
        }
        Self { gamma: [arm0.gamma[0], arm1.gamma[1]], method: arm0.method, diagnostics }
    }
}

pub fn gamma_huber(rate: f64) -> Result<GammaEstimate> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::invalid(format!("contamination rate {} outside [0, 1]", rate)));
    }
    Ok(GammaEstimate::single("huber", rate))
}

/// `max_x |P(X = x) − P(X̃ = x)|` for two distributions on the same support.
pub fn gamma_misclassification(p: &[f64], q: &[f64]) -> Result<GammaEstimate> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::dim(format!("supports of size {} and {}", p.len(), q.len())));
    }
    for t in [p, q] {
        if t.iter().any(|v| !(*v >= 0.0)) || (t.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("misclassification tables must be probability vectors"));
        }
    }
    let g = p.iter().zip(q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(GammaEstimate::single("misclassification", g.min(1.0)))
}

/// `sqrt(D_A(θ̃, θ) / 2)` with the Bregman divergence of the log-partition `A`,
/// given as a value-and-gradient callback.
pub fn gamma_tilting<F>(theta: &[f64], theta_tilde: &[f64], log_partition: F) -> Result<GammaEstimate>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    if theta.len() != theta_tilde.len() {
        return Err(Error::dim("natural parameters differ in length"));
    }
    let (a, grad) = log_partition(theta);
    let (a_tilde, _) = log_partition(theta_tilde);
    if grad.len() != theta.len() {
        return Err(Error::dim("log-partition gradient has the wrong length"));
    }
    let bregman = a_tilde - a - grad.iter().zip(theta_tilde.iter().zip(theta)).map(|(g, (t1, t0))| g * (t1 - t0)).sum::<f64>();
    if !bregman.is_finite() || bregman < -1e-12 {
        return Err(Error::invalid(format!("Bregman divergence {} is negative; the log-partition is not convex", bregman)));
    }
    let bregman = bregman.max(0.0);
    let mut est = GammaEstimate::single("tilting", (0.5 * bregman).sqrt().min(1.0));
    est.diagnostics.insert("bregman".into(), bregman);
    Ok(est)
}

/// Histogram plug-in estimate of `KL(p‖q)` turned into a budget by Pinsker's
/// inequality, `γ = min(1, sqrt(KL/2))`.
pub fn gamma_pinsker(samples_p: &[f64], samples_q: &[f64], bins: usize) -> Result<GammaEstimate> {
    if samples_p.is_empty() || samples_q.is_empty() {
        return Err(Error::Empty("both sample sets must be nonempty".into()));
    }
    if bins < 2 {
        return Err(Error::invalid("at least two bins are needed"));
    }
    if samples_p.iter().chain(samples_q).any(|v| !v.is_finite()) {
        return Err(Error::invalid("samples must be finite"));
    }
    let lo = samples_p.iter().chain(samples_q).fold(f64::INFINITY, |m, v| m.min(*v));
    let hi = samples_p.iter().chain(samples_q).fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let hist = |s: &[f64]| -> Vec<f64> {
        let mut c = vec![0.0; bins];
        for v in s {
            let k = (((v - lo) / width) as usize).min(bins - 1);
            c[k] += 1.0;
        }
        let n = s.len() as f64;
        let smooth = 1.0 / (n * bins as f64);
        let total = 1.0 + bins as f64 * smooth;
        c.iter().map(|k| (k / n + smooth) / total).collect()
    };
    let (p, q) = (hist(samples_p), hist(samples_q));
    let kl: f64 = p.iter().zip(&q).map(|(a, b)| a * (a / b).ln()).sum::<f64>().max(0.0);
    let mut est = GammaEstimate::single("pinsker", (0.5 * kl).sqrt().min(1.0));
    est.diagnostics.insert("kl".into(), kl);
    Ok(est)
}

/// Gaussian noise strengths used by the synthetic experiments, by level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSchedule {
    /// Three levels: mean 0.1/0.3/0.5, std 0.5/0.5/1.
    ThreeLevel,
    /// Five levels: mean 1/2/3/4/5, std 1.
    KangSchafer,
    /// Five levels: mean 0.1/0.2/0.3/0.4/0.5, std 0.5/0.5/1/1/1.
    FiveLevel,
}

impl NoiseSchedule {
    pub fn levels(self) -> usize {
        match self {
            NoiseSchedule::ThreeLevel => 3,
            NoiseSchedule::KangSchafer | NoiseSchedule::FiveLevel => 5,
        }
    }

    /// The Gaussian noise at a 1-based level.
    pub fn model(self, level: usize) -> Result<NoiseModel> {
        if level == 0 || level > self.levels() {
            return Err(Error::invalid(format!("noise level {} outside 1..={}", level, self.levels())));
        }
        let k = level - 1;
        let (mean, std) = match self {
            NoiseSchedule::ThreeLevel => ([0.1, 0.3, 0.5][k], [0.5, 0.5, 1.0][k]),
            NoiseSchedule::KangSchafer => (level as f64, 1.0),
            NoiseSchedule::FiveLevel => (0.1 * level as f64, [0.5, 0.5, 1.0, 1.0, 1.0][k]),
        };
        Ok(NoiseModel::GaussianAdditive { mean, std })
    }
}

/// Default TV budget for a 1-based noise level: 0.1 per level.
pub fn level_gamma(level: usize) -> f64 {
    0.1 * level as f64
}
