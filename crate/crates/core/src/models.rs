//! Parametric model families with weighted log-likelihoods and analytic gradients.
//!
//! Every family shares one parameter layout: `θ = (intercept, treatment, covariates…)`.
//! The partially linear model reads the same vector as `θ_0 = (intercept, covariates…)`
//! for the nuisance regression and `θ_1 = treatment` for the effect.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities inside log terms are clamped to `[PROB_FLOOR, 1 − PROB_FLOOR]`.
pub const PROB_FLOOR: f64 = 1e-9;

/// The affine score at which the probability clamp becomes active.
pub(crate) fn score_cap() -> f64 {
    ((1.0 - PROB_FLOOR) / PROB_FLOOR).ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Linear,
    Logistic,
    Plm,
}

/// What a model predicts: the outcome given `(x, z)`, or the treatment given `x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Outcome,
    Propensity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub family: Family,
    pub theta: Vec<f64>,
    /// Gaussian noise scale; ignored by the logistic family.
    pub sigma: f64,
}

impl ModelParams {
    pub fn new(family: Family, theta: Vec<f64>) -> Result<Self> {
        Self::with_sigma(family, theta, 1.0)
    }

    pub fn with_sigma(family: Family, theta: Vec<f64>, sigma: f64) -> Result<Self> {
        if theta.len() < 2 {
            return Err(Error::dim(format!("theta has {} entries, need intercept and treatment", theta.len())));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma = {} must be positive", sigma)));
        }
        Ok(Self { family, theta, sigma })
    }

    pub fn zeros(family: Family, covariate_dim: usize) -> Self {
        Self { family, theta: vec![0.0; covariate_dim + 2], sigma: 1.0 }
    }

    pub fn covariate_dim(&self) -> usize {
        self.theta.len() - 2
    }

    pub fn intercept(&self) -> f64 {
        self.theta[0]
    }

    pub fn treatment_coef(&self) -> f64 {
        self.theta[1]
    }

    pub fn covariate_coefs(&self) -> &[f64] {
        &self.theta[2..]
    }

    /// Nuisance part `θ_0` of a partially linear model: intercept then covariate coefficients.
    pub fn theta_0(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.theta.len() - 1);
        out.push(self.theta[0]);
        out.extend_from_slice(&self.theta[2..]);
        out
    }

    /// Effect part `θ_1` of a partially linear model.
    pub fn theta_1(&self) -> f64 {
        self.theta[1]
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.covariate_dim() {
            return Err(Error::dim(format!("{} covariates for a model over {}", x.len(), self.covariate_dim())));
        }
        Ok(())
    }
}

/// One row seen through the current weights.
#[derive(Clone, Copy, Debug)]
pub struct WeightedSample<'a> {
    pub x: &'a [f64],
    pub y: f64,
    pub z: u8,
    pub weight: f64,
}

pub(crate) fn affine(theta: &[f64], x: &[f64], z: f64) -> f64 {
    theta[0] + theta[1] * z + theta[2..].iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
}

pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^s)` without overflow.
pub(crate) fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

pub fn linear_predict(params: &ModelParams, x: &[f64], z: u8) -> Result<f64> {
    params.check_dim(x)?;
    Ok(affine(&params.theta, x, z as f64))
}

pub fn logistic_predict(params: &ModelParams, x: &[f64], z: u8) -> Result<f64> {
    params.check_dim(x)?;
    let p = sigmoid(affine(&params.theta, x, z as f64));
    Ok(p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
}

fn check_samples(params: &ModelParams, samples: &[WeightedSample], target: Target) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Empty("no samples".into()));
    }
    if target == Target::Propensity && params.family != Family::Logistic {
        return Err(Error::invalid("propensity models must use the logistic family"));
    }
    for s in samples {
        params.check_dim(s.x)?;
        if !(s.weight >= 0.0) {
            return Err(Error::invalid(format!("sample weight {} is negative", s.weight)));
        }
    }
    Ok(())
}

/// Label and feature-space treatment for one sample under a target.
fn label_and_z(s: &WeightedSample, target: Target) -> (f64, f64) {
    match target {
        Target::Outcome => (s.y, s.z as f64),
        Target::Propensity => (s.z as f64, 0.0),
    }
}

/// `Σ_i weight_i · log p_θ(label_i | features_i)`.
pub fn weighted_loglik(params: &ModelParams, samples: &[WeightedSample], target: Target) -> Result<f64> {
    check_samples(params, samples, target)?;
    let mut total = 0.0;
    for s in samples {
        if s.weight == 0.0 {
            continue;
        }
        let (label, z) = label_and_z(s, target);
        let score = affine(&params.theta, s.x, z);
        let ll = match params.family {
            Family::Logistic => -bernoulli_nll(score, label),
            Family::Linear | Family::Plm => {
                let sigma2 = params.sigma * params.sigma;
                -0.5 * (2.0 * std::f64::consts::PI * sigma2).ln() - (label - score).powi(2) / (2.0 * sigma2)
            }
        };
        total += s.weight * ll;
    }
    Ok(total)
}

pub fn loglik_grad_theta(params: &ModelParams, samples: &[WeightedSample], target: Target) -> Result<Vec<f64>> {
    check_samples(params, samples, target)?;
    let mut grad = vec![0.0; params.theta.len()];
    for s in samples {
        if s.weight == 0.0 {
            continue;
        }
        let (label, z) = label_and_z(s, target);
        let score = affine(&params.theta, s.x, z);
        let r = match params.family {
            Family::Logistic => -bernoulli_nll_slope(score, label),
            Family::Linear | Family::Plm => (label - score) / (params.sigma * params.sigma),
        };
        let c = s.weight * r;
        grad[0] += c;
        grad[1] += c * z;
        for (g, xj) in grad[2..].iter_mut().zip(s.x) {
            *g += c * xj;
        }
    }
    Ok(grad)
}

/// Weighted mean squared residual `Σ_i weight_i (y_i − g(x_i, z_i; θ))²`.
pub fn mse_residual(params: &ModelParams, samples: &[WeightedSample]) -> Result<f64> {
    if params.family == Family::Logistic {
        return Err(Error::invalid("the logistic family has no squared-error constraint; use its log-likelihood"));
    }
    check_samples(params, samples, Target::Outcome)?;
    Ok(samples
        .iter()
        .filter(|s| s.weight != 0.0)
        .map(|s| s.weight * (s.y - affine(&params.theta, s.x, s.z as f64)).powi(2))
        .sum())
}

/// Bernoulli negative log-likelihood at an affine score, with the probability clamp.
pub(crate) fn bernoulli_nll(score: f64, label: f64) -> f64 {
    let cap = score_cap();
    let s = score.clamp(-cap, cap);
    softplus(s) - label * s
}

/// Derivative of [`bernoulli_nll`] in the score; zero where the clamp is active.
pub(crate) fn bernoulli_nll_slope(score: f64, label: f64) -> f64 {
    if score.abs() > score_cap() {
        0.0
    } else {
        sigmoid(score) - label
    }
}

/// Row-major feature matrix `φ_i = (1, z_i, x_i)` with labels, shared by
/// fitting routines and the solver.
#[derive(Clone, Debug)]
pub(crate) struct Design {
    pub p: usize,
    pub phi: Vec<f64>,
    pub label: Vec<f64>,
    pub family: Family,
    /// Propensity designs zero the treatment column and hold its coefficient at 0.
    pub masked_treatment: bool,
}

impl Design {
    pub fn new(x: &[f64], dim: usize, y: &[f64], z: &[u8], family: Family, target: Target) -> Self {
        let n = y.len();
        let p = dim + 2;
        let mut phi = Vec::with_capacity(n * p);
        let mut label = Vec::with_capacity(n);
        for i in 0..n {
            phi.push(1.0);
            match target {
                Target::Outcome => {
                    phi.push(z[i] as f64);
                    label.push(y[i]);
                }
                Target::Propensity => {
                    phi.push(0.0);
                    label.push(z[i] as f64);
                }
            }
            phi.extend_from_slice(&x[i * dim..(i + 1) * dim]);
        }
        Self { p, phi, label, family, masked_treatment: target == Target::Propensity }
    }

    pub fn rows(&self) -> usize {
        self.label.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.phi[i * self.p..(i + 1) * self.p]
    }

    pub fn score(&self, i: usize, theta: &[f64]) -> f64 {
        self.row(i).iter().zip(theta).map(|(a, b)| a * b).sum()
    }

    /// Per-row loss: squared residual or Bernoulli negative log-likelihood.
    pub fn loss(&self, i: usize, theta: &[f64]) -> f64 {
        let s = self.score(i, theta);
        match self.family {
            Family::Logistic => bernoulli_nll(s, self.label[i]),
            Family::Linear | Family::Plm => (self.label[i] - s).powi(2),
        }
    }

    /// `loss(i, θ) − loss(i, θ_ref)` evaluated without cancellation.
    pub fn loss_diff(&self, i: usize, theta: &[f64], theta_ref: &[f64]) -> f64 {
        let row = self.row(i);
        let delta: f64 = row.iter().zip(theta.iter().zip(theta_ref)).map(|(f, (a, b))| f * (a - b)).sum();
        let s_ref = self.score(i, theta_ref);
        match self.family {
            Family::Linear | Family::Plm => {
                let r_ref = self.label[i] - s_ref;
                delta * (delta - 2.0 * r_ref)
            }
            Family::Logistic => {
                let cap = score_cap();
                let (a, b) = ((s_ref + delta).clamp(-cap, cap), s_ref.clamp(-cap, cap));
                let d = a - b;
                // softplus(a) − softplus(b) = ln(1 + σ(b)(e^d − 1))
                (sigmoid(b) * d.exp_m1()).ln_1p() - self.label[i] * d
            }
        }
    }

    /// Derivative of the per-row loss in the score.
    pub fn loss_slope(&self, i: usize, theta: &[f64]) -> f64 {
        let s = self.score(i, theta);
        match self.family {
            Family::Logistic => bernoulli_nll_slope(s, self.label[i]),
            Family::Linear | Family::Plm => 2.0 * (s - self.label[i]),
        }
    }

    /// Second derivative of the per-row loss in the score.
    pub fn loss_curvature(&self, i: usize, theta: &[f64]) -> f64 {
        match self.family {
            Family::Logistic => {
                let s = self.score(i, theta);
                if s.abs() > score_cap() {
                    0.0
                } else {
                    let p = sigmoid(s);
                    p * (1.0 - p)
                }
            }
            Family::Linear | Family::Plm => 2.0,
        }
    }

    /// Weighted loss `Σ m_i ℓ_i(θ)`, its gradient and Hessian in θ.
    pub fn objective(&self, theta: &[f64], mass: &[f64]) -> (f64, Vec<f64>, DMatrix<f64>) {
        let p = self.p;
        let mut f = 0.0;
        let mut g = vec![0.0; p];
        let mut h = DMatrix::zeros(p, p);
        for i in 0..self.rows() {
            let m = mass[i];
            if m == 0.0 {
                continue;
            }
            f += m * self.loss(i, theta);
            let slope = m * self.loss_slope(i, theta);
            let curv = m * self.loss_curvature(i, theta);
            let row = self.row(i);
            for a in 0..p {
                g[a] += slope * row[a];
                if curv != 0.0 {
                    let ca = curv * row[a];
                    for b in a..p {
                        h[(a, b)] += ca * row[b];
                    }
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                h[(a, b)] = h[(b, a)];
            }
        }
        if self.masked_treatment {
            g[1] = 0.0;
        }
        (f, g, h)
    }

    /// Minimizer of `Σ m_i ℓ_i(θ)`; `init` warm-starts the logistic Newton iteration.
    pub fn fit(&self, mass: &[f64], init: Option<&[f64]>) -> Result<Vec<f64>> {
        match self.family {
            Family::Linear | Family::Plm => self.fit_least_squares(mass),
            Family::Logistic => self.fit_logistic(mass, init),
        }
    }

    fn fit_least_squares(&self, mass: &[f64]) -> Result<Vec<f64>> {
        let p = self.p;
        let mut h = DMatrix::zeros(p, p);
        let mut b = DVector::zeros(p);
        for i in 0..self.rows() {
            let m = mass[i];
            if m == 0.0 {
                continue;
            }
            let row = self.row(i);
            for a in 0..p {
                let ma = m * row[a];
                b[a] += ma * self.label[i];
                for c in a..p {
                    h[(a, c)] += ma * row[c];
                }
            }
        }
        for a in 0..p {
            for c in 0..a {
                h[(a, c)] = h[(c, a)];
            }
        }
        let sol = solve_spd(h, b, self.masked_treatment)?;
        Ok(sol.iter().copied().collect())
    }

    fn fit_logistic(&self, mass: &[f64], init: Option<&[f64]>) -> Result<Vec<f64>> {
        let mut theta = init.map_or_else(|| vec![0.0; self.p], <[f64]>::to_vec);
        let total: f64 = mass.iter().sum();
        let (mut f, mut g, mut h) = self.objective(&theta, mass);
        for _ in 0..100 {
            let step = solve_spd(h.clone(), DVector::from_vec(g.clone()), self.masked_treatment)?;
            // Newton decrement: the predicted drop in f from a full step.
            let decrement = dot(&g, step.as_slice());
            if decrement <= 1e-24 * total.max(1e-300) {
                break;
            }
            let last = decrement <= 1e-14 * total;
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
                let (fc, gc, hc) = self.objective(&cand, mass);
                // Near the optimum f is flat to rounding, so a full step is
                // taken on the decrement alone.
                if last || fc <= f - 1e-4 * t * decrement {
                    theta = cand;
                    f = fc;
                    g = gc;
                    h = hc;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted || last {
                break;
            }
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical { iterate: 0, message: "logistic fit diverged".into() });
        }
        Ok(theta)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `H s = b` for symmetric positive (semi)definite `H`, adding a small
/// ridge when the factorization fails. A masked treatment coordinate is pinned.
pub(crate) fn solve_spd(mut h: DMatrix<f64>, mut b: DVector<f64>, masked_treatment: bool) -> Result<DVector<f64>> {
    let p = h.nrows();
    if masked_treatment {
        for k in 0..p {
            h[(1, k)] = 0.0;
            h[(k, 1)] = 0.0;
        }
        h[(1, 1)] = 1.0;
        b[1] = 0.0;
    }
    let scale = (0..p).map(|k| h[(k, k)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut ridge = 0.0;
    for _ in 0..8 {
        let mut m = h.clone();
        for k in 0..p {
            m[(k, k)] += ridge;
        }
        if let Some(ch) = m.cholesky() {
            return Ok(ch.solve(&b));
        }
        ridge = if ridge == 0.0 { 1e-12 * scale } else { ridge * 100.0 };
    }
    Err(Error::Degenerate("normal equations are singular".into()))
}
