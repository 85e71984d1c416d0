//! Causal plug-in estimators as functionals of `(θ, weights)`.
//!
//! Each estimator pairs an objective `Q(θ, p̄)` with a likelihood functional
//! `f_1(θ, p̄)` (weighted squared error or weighted negative log-likelihood).
//! The constraint residual is the likelihood shortfall against the best fit
//! under the same weights, minus a slack: `v = f_1(θ, p̄) − min_θ' f_1(θ', p̄) − ε`.
//!
//! Arm expectations are always renormalized within the arm, and the arms are
//! combined with the observed frequencies `π_z = n_z / n`.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{ArmIndex, ObservedDataset};
use crate::empirical::WeightTable;
use crate::error::{Error, Result};
use crate::models::{sigmoid, Design, Family, ModelParams, Target};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Backdoor,
    Ipw,
    Frontdoor,
    DoubleMl,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Backdoor => "backdoor",
            EstimatorKind::Ipw => "ipw",
            EstimatorKind::Frontdoor => "frontdoor",
            EstimatorKind::DoubleMl => "double_ml",
        }
    }
}

/// Covariate law the backdoor outcome model is averaged over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackdoorLaw {
    /// `Σ_z π_z E_{p̄x|z}[g(X,1) − g(X,0)]`: the adjustment formula over the
    /// marginal covariate law.
    #[default]
    Pooled,
    /// `E_{p̄x|z=1}[g(X,1)] − E_{p̄x|z=0}[g(X,0)]`.
    ArmConditional,
}

/// Slack `ε` of the likelihood constraint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slack {
    /// Multiple of the attained minimum of `f_1` under uniform weights.
    Relative(f64),
    Absolute(f64),
}

impl Default for Slack {
    fn default() -> Self {
        Slack::Relative(1e-10)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    /// Outcome model family for backdoor and frontdoor. IPW always fits a
    /// logistic propensity model and double ML a partially linear model.
    pub family: Family,
    pub backdoor_law: BackdoorLaw,
    /// Propensities are clipped to `[clip, 1 − clip]`.
    pub propensity_clip: f64,
    pub slack: Slack,
    /// Seed of the shuffle that splits rows into fitting and evaluation halves.
    pub split_seed: u64,
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        Self {
            kind: EstimatorKind::Backdoor,
            family: Family::Linear,
            backdoor_law: BackdoorLaw::Pooled,
            propensity_clip: 0.01,
            slack: Slack::default(),
            split_seed: 0,
        }
    }
}

impl EstimatorSpec {
    pub fn new(kind: EstimatorKind) -> Self {
        Self { kind, ..Self::default() }
    }

    pub fn backdoor() -> Self {
        Self::new(EstimatorKind::Backdoor)
    }

    pub fn ipw() -> Self {
        Self::new(EstimatorKind::Ipw)
    }

    pub fn frontdoor() -> Self {
        Self::new(EstimatorKind::Frontdoor)
    }

    pub fn double_ml() -> Self {
        Self::new(EstimatorKind::DoubleMl)
    }

    pub fn with_family(mut self, family: Family) -> Self {
        self.family = family;
        self
    }

    pub fn with_law(mut self, law: BackdoorLaw) -> Self {
        self.backdoor_law = law;
        self
    }

    pub fn with_slack(mut self, slack: Slack) -> Self {
        self.slack = slack;
        self
    }

    pub fn with_split_seed(mut self, seed: u64) -> Self {
        self.split_seed = seed;
        self
    }

    /// The family θ actually belongs to for this estimator.
    pub fn model_family(&self) -> Family {
        match self.kind {
            EstimatorKind::Ipw => Family::Logistic,
            EstimatorKind::DoubleMl => Family::Plm,
            EstimatorKind::Backdoor | EstimatorKind::Frontdoor => self.family,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.propensity_clip > 0.0 && self.propensity_clip < 0.5) {
            return Err(Error::invalid(format!("propensity clip {} outside (0, 0.5)", self.propensity_clip)));
        }
        if self.kind != EstimatorKind::Ipw && self.family == Family::Plm && self.kind != EstimatorKind::DoubleMl {
            return Err(Error::invalid("the partially linear family is reserved for double ML"));
        }
        match self.slack {
            Slack::Relative(v) | Slack::Absolute(v) if !(v >= 0.0 && v.is_finite()) => {
                Err(Error::invalid(format!("slack {} must be nonnegative", v)))
            }
            _ => Ok(()),
        }
    }

    /// `Q(θ, p̄)` at the given per-arm weights.
    pub fn objective(&self, theta: &ModelParams, weights: &WeightTable, data: &ObservedDataset) -> Result<f64> {
        let problem = Problem::new(self, data)?;
        problem.check_theta(theta)?;
        let a = problem.row_weights(weights)?;
        Ok(problem.objective(&theta.theta, &a, None))
    }

    /// Constraint residual `v(θ, p̄)`; `v ≤ 0` means θ is an ε-maximizer of the weighted likelihood.
    pub fn likelihood_constraint(&self, theta: &ModelParams, weights: &WeightTable, data: &ObservedDataset) -> Result<f64> {
        let problem = Problem::new(self, data)?;
        problem.check_theta(theta)?;
        let a = problem.row_weights(weights)?;
        let star = problem.fit(&a, Some(&theta.theta))?;
        Ok(problem.constraint(&theta.theta, &star, &a, None))
    }

    /// `f_1(θ, p̄)`: weighted mean squared residual or weighted negative log-likelihood.
    pub fn likelihood_loss(&self, theta: &ModelParams, weights: &WeightTable, data: &ObservedDataset) -> Result<f64> {
        let problem = Problem::new(self, data)?;
        problem.check_theta(theta)?;
        let a = problem.row_weights(weights)?;
        Ok(problem.loss(&theta.theta, &a))
    }

    /// The maximizer of the weighted likelihood under `weights`.
    pub fn fit(&self, weights: &WeightTable, data: &ObservedDataset) -> Result<ModelParams> {
        let problem = Problem::new(self, data)?;
        let a = problem.row_weights(weights)?;
        let theta = problem.fit(&a, None)?;
        Ok(ModelParams { family: self.model_family(), theta, sigma: 1.0 })
    }

    /// Unweighted fit on the noisy data, evaluated at uniform weights.
    pub fn naive_estimate(&self, data: &ObservedDataset) -> Result<AteEstimate> {
        let problem = Problem::new(self, data)?;
        let a = problem.uniform_row_weights();
        let theta = problem.fit(&a, None)?;
        let value = problem.objective(&theta, &a, None);
        if !value.is_finite() {
            return Err(Error::Numerical { iterate: 0, message: "naive estimate is not finite".into() });
        }
        Ok(AteEstimate { value, kind: self.kind, theta: ModelParams { family: self.model_family(), theta, sigma: 1.0 } })
    }
}

impl EstimatorSpec {
    /// `Q` at raw (unnormalized, nonnegative) per-arm weights; each arm is
    /// renormalized, so the value is invariant to rescaling an arm.
    pub fn objective_raw(&self, theta: &ModelParams, arm_weights: [&[f64]; 2], data: &ObservedDataset) -> Result<f64> {
        let problem = Problem::new(self, data)?;
        problem.check_theta(theta)?;
        let a = problem.raw_row_weights(arm_weights)?;
        Ok(problem.objective(&theta.theta, &a, None))
    }

    /// `v` at raw per-arm weights, refitting the weighted MLE.
    pub fn constraint_raw(&self, theta: &ModelParams, arm_weights: [&[f64]; 2], data: &ObservedDataset) -> Result<f64> {
        let problem = Problem::new(self, data)?;
        problem.check_theta(theta)?;
        let a = problem.raw_row_weights(arm_weights)?;
        let star = problem.fit(&a, Some(&theta.theta))?;
        Ok(problem.constraint(&theta.theta, &star, &a, None))
    }

    /// Analytic gradients of `Q` in θ and in the raw per-arm weights.
    pub fn objective_gradients(&self, theta: &ModelParams, arm_weights: [&[f64]; 2], data: &ObservedDataset) -> Result<Gradients> {
        let problem = Problem::new(self, data)?;
        problem.check_theta(theta)?;
        let a = problem.raw_row_weights(arm_weights)?;
        let mut g_theta = vec![0.0; problem.p];
        let mut g_rows = vec![0.0; problem.n];
        let value = problem.objective(&theta.theta, &a, Some(Grads { theta: &mut g_theta, rows: &mut g_rows }));
        Ok(problem.split_gradients(value, g_theta, &g_rows))
    }

    /// Analytic gradients of `v`. The weight gradient holds the refitted MLE
    /// fixed, which is exact by the envelope theorem.
    pub fn constraint_gradients(&self, theta: &ModelParams, arm_weights: [&[f64]; 2], data: &ObservedDataset) -> Result<Gradients> {
        let problem = Problem::new(self, data)?;
        problem.check_theta(theta)?;
        let a = problem.raw_row_weights(arm_weights)?;
        let star = problem.fit(&a, Some(&theta.theta))?;
        let mut g_rows = vec![0.0; problem.n];
        let value = problem.constraint(&theta.theta, &star, &a, Some(&mut g_rows));
        let (_, g_theta, _) = problem.loss_derivatives(&theta.theta, &a);
        Ok(problem.split_gradients(value, g_theta, &g_rows))
    }
}

/// A value with its gradient in θ and in each arm's weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub value: f64,
    pub theta: Vec<f64>,
    pub weights: [Vec<f64>; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AteEstimate {
    pub value: f64,
    pub kind: EstimatorKind,
    pub theta: ModelParams,
}

pub fn naive_estimate(spec: &EstimatorSpec, data: &ObservedDataset) -> Result<AteEstimate> {
    spec.naive_estimate(data)
}

pub fn likelihood_constraint(
    spec: &EstimatorSpec,
    theta: &ModelParams,
    weights: &WeightTable,
    data: &ObservedDataset,
) -> Result<f64> {
    spec.likelihood_constraint(theta, weights, data)
}

pub fn backdoor_objective(theta: &ModelParams, weights: &WeightTable, data: &ObservedDataset, law: BackdoorLaw) -> Result<f64> {
    EstimatorSpec::backdoor().with_family(theta.family).with_law(law).objective(theta, weights, data)
}

pub fn ipw_objective(theta: &ModelParams, weights: &WeightTable, data: &ObservedDataset) -> Result<f64> {
    EstimatorSpec::ipw().objective(theta, weights, data)
}

pub fn frontdoor_objective(theta: &ModelParams, weights: &WeightTable, data: &ObservedDataset) -> Result<f64> {
    EstimatorSpec::frontdoor().with_family(theta.family).objective(theta, weights, data)
}

/// Double ML objective using the evaluation half selected by `split_seed`.
pub fn doubleml_objective(theta: &ModelParams, weights: &WeightTable, data: &ObservedDataset, split_seed: u64) -> Result<f64> {
    EstimatorSpec::double_ml().with_split_seed(split_seed).objective(theta, weights, data)
}

/// Seeded split of row indices into (fitting half, evaluation half).
pub fn split_halves(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let second = rows.split_off(n / 2);
    (rows, second)
}

/// Derivatives requested from an evaluation, accumulated into caller buffers.
pub(crate) struct Grads<'a> {
    pub theta: &'a mut [f64],
    pub rows: &'a mut [f64],
}

/// An estimator compiled against one dataset.
///
/// Row weights `a` are indexed by dataset row and need not be normalized;
/// every expectation renormalizes within its arm (and, for double ML, within
/// its half of the data).
pub(crate) struct Problem {
    pub spec: EstimatorSpec,
    pub design: Design,
    pub arms: ArmIndex,
    pub n: usize,
    pub p: usize,
    /// Arm frequencies over the evaluation rows.
    /// Arm frequencies over the likelihood rows.
    pub pi_fit: [f64; 2],
    /// Marginal arm frequencies over all rows (frontdoor's `P(Z = z')`).
    pub pi_all: [f64; 2],
    in_fit: Vec<bool>,
    in_eval: Vec<bool>,
    y: Vec<f64>,
    z: Vec<u8>,
    kappa: [f64; 2],
    /// Slack `ε` of the likelihood constraint.
    pub eps: f64,
}

impl Problem {
    pub fn new(spec: &EstimatorSpec, data: &ObservedDataset) -> Result<Self> {
        spec.validate()?;
        if data.is_empty() {
            return Err(Error::Empty("dataset has no rows".into()));
        }
        data.require_both_arms()?;
        let n = data.len();
        let target = if spec.kind == EstimatorKind::Ipw { Target::Propensity } else { Target::Outcome };
        let design = Design::new(data.covariates(), data.dim(), data.outcomes(), data.treatments(), spec.model_family(), target);
        let z = data.treatments().to_vec();

        let (in_fit, in_eval) = if spec.kind == EstimatorKind::DoubleMl {
            let (first, second) = split_halves(n, spec.split_seed);
            let mut fit = vec![false; n];
            let mut eval = vec![false; n];
            first.iter().for_each(|&i| fit[i] = true);
            second.iter().for_each(|&i| eval[i] = true);
            (fit, eval)
        } else {
            (vec![true; n], vec![true; n])
        };
        let freq = |mask: &[bool]| -> [f64; 2] {
            let mut c = [0usize; 2];
            let mut total = 0usize;
            for i in 0..n {
                if mask[i] {
                    c[z[i] as usize] += 1;
                    total += 1;
                }
            }
            [c[0] as f64 / total.max(1) as f64, c[1] as f64 / total.max(1) as f64]
        };
        let pi_fit = freq(&in_fit);
        let pi_eval = freq(&in_eval);
        let pi_all = freq(&vec![true; n]);
        if spec.kind == EstimatorKind::DoubleMl {
            if pi_fit[0] == 0.0 || pi_fit[1] == 0.0 {
                return Err(Error::Positivity("the fitting half lacks one treatment arm".into()));
            }
            if pi_eval[1] == 0.0 {
                return Err(Error::Degenerate("the evaluation half has E[Z²] = 0".into()));
            }
        }
        let kappa = match (spec.kind, spec.backdoor_law) {
            (EstimatorKind::Backdoor, BackdoorLaw::Pooled) => [pi_eval[0], pi_eval[1]],
            (EstimatorKind::Backdoor, BackdoorLaw::ArmConditional) => [-1.0, 1.0],
            (EstimatorKind::Ipw, _) => [-pi_eval[0], pi_eval[1]],
            (EstimatorKind::Frontdoor, _) => [-1.0, 1.0],
            (EstimatorKind::DoubleMl, _) => [0.0, 1.0],
        };
        let mut problem = Self {
            spec: spec.clone(),
            p: design.p,
            design,
            arms: ArmIndex::new(data),
            n,
            pi_fit,
            pi_all,
            in_fit,
            in_eval,
            y: data.outcomes().to_vec(),
            z,
            kappa,
            eps: 0.0,
        };
        problem.eps = match spec.slack {
            Slack::Absolute(eps) => eps,
            Slack::Relative(r) => r * problem.loss_scale()?,
        };
        Ok(problem)
    }

    pub fn check_theta(&self, theta: &ModelParams) -> Result<()> {
        if theta.theta.len() != self.p {
            return Err(Error::dim(format!("theta has {} entries, expected {}", theta.theta.len(), self.p)));
        }
        Ok(())
    }

    pub fn row_weights(&self, weights: &WeightTable) -> Result<Vec<f64>> {
        let mut a = vec![0.0; self.n];
        for z in 0..2 {
            let w = weights.arm(z).weights();
            if w.len() != self.arms.count(z) {
                return Err(Error::dim(format!("arm {} has {} rows but {} weights", z, self.arms.count(z), w.len())));
            }
            for (k, &i) in self.arms.rows[z].iter().enumerate() {
                a[i] = w[k];
            }
        }
        Ok(a)
    }

    pub fn raw_row_weights(&self, arm_weights: [&[f64]; 2]) -> Result<Vec<f64>> {
        let mut a = vec![0.0; self.n];
        for z in 0..2 {
            let w = arm_weights[z];
            if w.len() != self.arms.count(z) {
                return Err(Error::dim(format!("arm {} has {} rows but {} weights", z, self.arms.count(z), w.len())));
            }
            if w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::invalid(format!("arm {} has a negative or non-finite weight", z)));
            }
            if w.iter().sum::<f64>() <= 0.0 {
                return Err(Error::invalid(format!("arm {} carries no weight", z)));
            }
            for (k, &i) in self.arms.rows[z].iter().enumerate() {
                a[i] = w[k];
            }
        }
        Ok(a)
    }

    pub fn split_gradients(&self, value: f64, theta: Vec<f64>, rows: &[f64]) -> Gradients {
        let weights = [0, 1].map(|z| self.arms.rows[z].iter().map(|&i| rows[i]).collect());
        Gradients { value, theta, weights }
    }

    pub fn uniform_row_weights(&self) -> Vec<f64> {
        (0..self.n).map(|i| 1.0 / self.arms.count(self.z[i] as usize) as f64).collect()
    }

    /// Per-arm weight totals over a row subset.
    fn totals(&self, a: &[f64], mask: &[bool]) -> [f64; 2] {
        let mut t = [0.0; 2];
        for i in 0..self.n {
            if mask[i] {
                t[self.z[i] as usize] += a[i];
            }
        }
        t
    }

    /// Joint row masses `π_z a_i / A_z` of the likelihood functional.
    pub fn masses(&self, a: &[f64]) -> Vec<f64> {
        let t = self.totals(a, &self.in_fit);
        (0..self.n)
            .map(|i| {
                let z = self.z[i] as usize;
                if self.in_fit[i] && t[z] > 0.0 {
                    self.pi_fit[z] * a[i] / t[z]
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn fit(&self, a: &[f64], init: Option<&[f64]>) -> Result<Vec<f64>> {
        self.design.fit(&self.masses(a), init)
    }

    pub fn loss(&self, theta: &[f64], a: &[f64]) -> f64 {
        let m = self.masses(a);
        (0..self.n).filter(|&i| m[i] != 0.0).map(|i| m[i] * self.design.loss(i, theta)).sum()
    }

    /// The likelihood functional with its θ-gradient and θ-Hessian.
    pub fn loss_derivatives(&self, theta: &[f64], a: &[f64]) -> (f64, Vec<f64>, DMatrix<f64>) {
        self.design.objective(theta, &self.masses(a))
    }

    /// Attained minimum of `f_1` under uniform weights, floored away from zero.
    pub fn loss_scale(&self) -> Result<f64> {
        let a = self.uniform_row_weights();
        let star = self.fit(&a, None)?;
        Ok(self.loss(&star, &a).max(1e-12))
    }

    /// `f_1(θ) − f_1(θ*)` under weights `a`, with its row-weight gradient.
    /// The θ-gradient of the shortfall is that of `f_1` itself.
    pub fn shortfall(&self, theta: &[f64], star: &[f64], a: &[f64], rows: Option<&mut [f64]>) -> f64 {
        let t = self.totals(a, &self.in_fit);
        let mut mean = [0.0; 2];
        let mut diff = vec![0.0; self.n];
        for i in 0..self.n {
            if !self.in_fit[i] {
                continue;
            }
            let z = self.z[i] as usize;
            if t[z] > 0.0 {
                diff[i] = self.design.loss_diff(i, theta, star);
                mean[z] += a[i] * diff[i] / t[z];
            }
        }
        if let Some(g) = rows {
            for i in 0..self.n {
                let z = self.z[i] as usize;
                if self.in_fit[i] && t[z] > 0.0 {
                    g[i] += self.pi_fit[z] * (diff[i] - mean[z]) / t[z];
                }
            }
        }
        self.pi_fit[0] * mean[0] + self.pi_fit[1] * mean[1]
    }

    pub fn constraint(&self, theta: &[f64], star: &[f64], a: &[f64], rows: Option<&mut [f64]>) -> f64 {
        self.shortfall(theta, star, a, rows) - self.eps
    }

    /// Per-row integrand `u_i(θ)` of the objective; fills `du` with its θ-gradient.
    fn integrand(&self, i: usize, theta: &[f64], du: Option<&mut [f64]>) -> f64 {
        let row = self.design.row(i);
        let zi = self.z[i] as f64;
        let base = self.design.score(i, theta);
        let logistic = self.design.family == Family::Logistic;
        // g(x_i, z') and its θ-gradient, accumulated with coefficient c.
        let g_at = |zp: f64, c: f64, du: Option<&mut [f64]>| -> f64 {
            let s = base + theta[1] * (zp - zi);
            let (val, slope) = if logistic {
                let p = sigmoid(s);
                (p, p * (1.0 - p))
            } else {
                (s, 1.0)
            };
            if let Some(du) = du {
                let k = c * slope;
                for (j, f) in row.iter().enumerate() {
                    du[j] += k * if j == 1 { zp } else { *f };
                }
            }
            c * val
        };
        let z1 = self.z[i] == 1;
        match self.spec.kind {
            EstimatorKind::Backdoor => match self.spec.backdoor_law {
                BackdoorLaw::Pooled => match du {
                    Some(du) => {
                        let hi = g_at(1.0, 1.0, Some(&mut *du));
                        hi + g_at(0.0, -1.0, Some(du))
                    }
                    None => g_at(1.0, 1.0, None) + g_at(0.0, -1.0, None),
                },
                BackdoorLaw::ArmConditional => g_at(zi, 1.0, du),
            },
            EstimatorKind::Frontdoor => {
                let (p0, p1) = (self.pi_all[0], self.pi_all[1]);
                match du {
                    Some(du) => {
                        let a = g_at(1.0, p1, Some(&mut *du));
                        a + g_at(0.0, p0, Some(du))
                    }
                    None => g_at(1.0, p1, None) + g_at(0.0, p0, None),
                }
            }
            EstimatorKind::Ipw => {
                let clip = self.spec.propensity_clip;
                let raw = sigmoid(base);
                let f = raw.clamp(clip, 1.0 - clip);
                let active = raw > clip && raw < 1.0 - clip;
                let y = self.y[i];
                let (val, dval_dp) = if z1 { (y / f, -y / (f * f)) } else { (y / (1.0 - f), y / ((1.0 - f) * (1.0 - f))) };
                if let (Some(du), true) = (du, active) {
                    let k = dval_dp * raw * (1.0 - raw);
                    for (j, f) in row.iter().enumerate() {
                        du[j] += k * f;
                    }
                }
                val
            }
            EstimatorKind::DoubleMl => {
                // y − f(x; θ_0), with f the nuisance part of the partially linear fit.
                let nuisance = base - theta[1] * zi;
                if let Some(du) = du {
                    for (j, f) in row.iter().enumerate() {
                        if j != 1 {
                            du[j] -= f;
                        }
                    }
                }
                self.y[i] - nuisance
            }
        }
    }

    /// `Q(θ, a) = Σ_z κ_z E_z[u]` over the evaluation rows.
    pub fn objective(&self, theta: &[f64], a: &[f64], grads: Option<Grads<'_>>) -> f64 {
        let t = self.totals(a, &self.in_eval);
        let mut mean = [0.0; 2];
        let mut u = vec![0.0; self.n];
        let mut du = vec![0.0; self.p];
        let want = grads.is_some();
        let mut gtheta = vec![0.0; self.p];
        for i in 0..self.n {
            let z = self.z[i] as usize;
            if !self.in_eval[i] || self.kappa[z] == 0.0 || t[z] <= 0.0 {
                continue;
            }
            let coef = self.kappa[z] * a[i] / t[z];
            if want {
                du.iter_mut().for_each(|v| *v = 0.0);
                u[i] = self.integrand(i, theta, Some(&mut du));
                if coef != 0.0 {
                    for j in 0..self.p {
                        gtheta[j] += coef * du[j];
                    }
                }
            } else {
                u[i] = self.integrand(i, theta, None);
            }
            mean[z] += a[i] * u[i] / t[z];
        }
        if let Some(g) = grads {
            for j in 0..self.p {
                g.theta[j] += gtheta[j];
            }
            for i in 0..self.n {
                let z = self.z[i] as usize;
                if self.in_eval[i] && self.kappa[z] != 0.0 && t[z] > 0.0 {
                    g.rows[i] += self.kappa[z] * (u[i] - mean[z]) / t[z];
                }
            }
        }
        self.kappa[0] * mean[0] + self.kappa[1] * mean[1]
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.y
    }
}
