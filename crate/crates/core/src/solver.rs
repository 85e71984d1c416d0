//! Projected gradient descent–ascent on the empirical Lagrangian
//! `L = s·Q(θ, p̄) + λ·v(θ, p̄)`, with `s = +1` for the lower bound and `−1`
//! for the upper bound.
//!
//! Each iteration alternates: θ starts from the weighted fit at the current
//! weights and takes a Newton-preconditioned step on the Lagrangian, λ takes a
//! multiplicative ascent step on the constraint residual, and each arm's
//! weights take a projected step onto the TV ball around the uniform law.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dataset::ObservedDataset;
use crate::empirical::{project_feasible_with, EmpiricalDistribution, ProjectionMethod, TvBudget, WeightTable};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorSpec, Grads, Problem};
use crate::models::{solve_spd, ModelParams};
use crate::par::{self, Workers};

const LAMBDA_FLOOR: f64 = 1e-12;
const LAMBDA_CEIL: f64 = 1e15;
const DAMP_FLOOR: f64 = 1e-3;
const MAX_RESTARTS: usize = 3;
const SWAP_ARM_LIMIT: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Lower,
    Upper,
}

impl Direction {
    /// Sign applied to `Q` in the Lagrangian.
    pub fn sign(self) -> f64 {
        match self {
            Direction::Lower => 1.0,
            Direction::Upper => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inference {
    /// Confidence limits hold at level `1 − alpha`.
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Step on the Newton direction of θ; 1 is a full Newton step.
    pub eta_theta: f64,
    /// Log-scale step of the multiplier: `λ ← λ·exp(η_λ·clamp(v/ε, −1, 1))`.
    pub eta_lambda: f64,
    /// Weight step per arm, as a relative change of a row's mass per unit of
    /// (outcome-scaled) gradient.
    pub eta_z: [f64; 2],
    pub iterations: usize,
    pub budget: TvBudget,
    /// Feasibility tolerance on `v`, relative to the attained minimum of `f_1`.
    pub tolerance_feas: f64,
    pub lambda_init: f64,
    /// Stop once the best feasible objective has not improved by more than
    /// `tolerance_stall·(1 + |best|)` for `patience` iterations; 0 disables.
    pub patience: usize,
    pub tolerance_stall: f64,
    pub inference: Option<Inference>,
    /// Keep per-iteration objective, residual and multiplier.
    pub trace: bool,
    pub projection: ProjectionMethod,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eta_theta: 1.0,
            eta_lambda: 0.25,
            eta_z: [1.0, 1.0],
            iterations: 2000,
            budget: TvBudget::zero(),
            tolerance_feas: 1e-9,
            lambda_init: 1.0,
            patience: 300,
            tolerance_stall: 1e-9,
            inference: None,
            trace: false,
            projection: ProjectionMethod::Exact,
        }
    }
}

impl SolverConfig {
    pub fn with_budget(mut self, gamma: f64) -> Result<Self> {
        self.budget = TvBudget::symmetric(gamma)?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [("eta_theta", self.eta_theta), ("eta_lambda", self.eta_lambda), ("eta_z[0]", self.eta_z[0]), ("eta_z[1]", self.eta_z[1])];
        for (name, v) in rates {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{} = {} must be a nonnegative number", name, v)));
            }
        }
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be at least 1"));
        }
        if !(self.tolerance_feas > 0.0) {
            return Err(Error::invalid("tolerance_feas must be positive"));
        }
        if !(self.tolerance_stall >= 0.0 && self.tolerance_stall.is_finite()) {
            return Err(Error::invalid("tolerance_stall must be nonnegative"));
        }
        if !(self.lambda_init >= 0.0 && self.lambda_init.is_finite()) {
            return Err(Error::invalid("lambda_init must be nonnegative"));
        }
        TvBudget::new(self.budget.gamma_0, self.budget.gamma_1)?;
        if let Some(inf) = self.inference {
            if !(inf.alpha > 0.0 && inf.alpha < 1.0) {
                return Err(Error::invalid(format!("alpha = {} outside (0, 1)", inf.alpha)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagrangeState {
    pub theta: ModelParams,
    pub lambda: f64,
    pub weights: WeightTable,
    pub iterate: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iterate: usize,
    pub objective: f64,
    pub residual: f64,
    pub lambda: f64,
}

/// Outcome of one projected GDA run: the best iterate satisfying the constraint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GdaRun {
    pub direction: Direction,
    pub state: LagrangeState,
    pub objective: f64,
    pub residual: f64,
    pub feasible: bool,
    /// TV distance of each arm's weights from uniform at the best iterate.
    pub tv: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceRecord>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceLimits {
    pub alpha: f64,
    pub rho: f64,
    /// `l_{τ_L}`
    pub lower_low: f64,
    /// `u_{τ_L}`
    pub lower_high: f64,
    /// `l_{τ_U}`
    pub upper_low: f64,
    /// `u_{τ_U}`
    pub upper_high: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub tau_lower: f64,
    pub tau_upper: f64,
    pub naive: f64,
    pub lower: GdaRun,
    pub upper: GdaRun,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confidence: Option<ConfidenceLimits>,
}

impl BoundResult {
    pub fn feasible(&self) -> bool {
        self.lower.feasible && self.upper.feasible
    }

    pub fn width(&self) -> f64 {
        self.tau_upper - self.tau_lower
    }

    pub fn covers(&self, value: f64) -> bool {
        self.tau_lower <= value && value <= self.tau_upper
    }
}

/// `s·Q(θ, p̄) + λ·v(θ, p̄)`.
pub fn lagrangian(spec: &EstimatorSpec, state: &LagrangeState, data: &ObservedDataset, direction: Direction) -> Result<f64> {
    let q = spec.objective(&state.theta, &state.weights, data)?;
    let v = spec.likelihood_constraint(&state.theta, &state.weights, data)?;
    Ok(direction.sign() * q + state.lambda * v)
}

/// Quantile `χ²_{1, 1−α}` of the chi-square law with one degree of freedom.
pub fn chi2_quantile(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha = {} outside (0, 1)", alpha)));
    }
    let chi = ChiSquared::new(1.0).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(chi.inverse_cdf(1.0 - alpha))
}

pub fn projected_gda(spec: &EstimatorSpec, data: &ObservedDataset, config: &SolverConfig, direction: Direction) -> Result<GdaRun> {
    config.validate()?;
    let problem = Problem::new(spec, data)?;
    let engine = Engine::new(&problem, config)?;
    let start = engine.initial_state()?;
    let out = engine.solve(start, direction)?;
    engine.finish(out, direction)
}

pub fn solve_bounds(spec: &EstimatorSpec, data: &ObservedDataset, config: &SolverConfig) -> Result<BoundResult> {
    solve_bounds_with(spec, data, config, Workers::default())
}

/// Runs the lower and upper programs (concurrently unless `workers` is 1) and,
/// when `config.inference` is set, the four nested confidence-limit programs.
pub fn solve_bounds_with(spec: &EstimatorSpec, data: &ObservedDataset, config: &SolverConfig, workers: Workers) -> Result<BoundResult> {
    config.validate()?;
    let problem = Problem::new(spec, data)?;
    let engine = Engine::new(&problem, config)?;
    let start = engine.initial_state()?;
    let naive = engine.problem.objective(&start.theta, &engine.row_weights(&start), None);
    let (lo, hi) = par::join(
        workers,
        || engine.solve(start.clone(), Direction::Lower),
        || engine.solve(start.clone(), Direction::Upper),
    );
    let (lo, hi) = (lo?, hi?);

    let confidence = match config.inference {
        Some(inf) => Some(engine.confidence(&lo, &hi, inf.alpha, workers)?),
        None => None,
    };
    let lower = engine.finish(lo, Direction::Lower)?;
    let upper = engine.finish(hi, Direction::Upper)?;
    Ok(BoundResult { tau_lower: lower.objective, tau_upper: upper.objective, naive, lower, upper, confidence })
}

/// Confidence limits `(l_{τ_L}, u_{τ_L}, l_{τ_U}, u_{τ_U})`; requires `config.inference`.
pub fn confidence_limits(spec: &EstimatorSpec, data: &ObservedDataset, config: &SolverConfig) -> Result<ConfidenceLimits> {
    if config.inference.is_none() {
        return Err(Error::invalid("confidence limits need inference.alpha"));
    }
    let result = solve_bounds(spec, data, config)?;
    Ok(result.confidence.expect("inference requested"))
}

#[derive(Clone, Debug)]
struct Iterate {
    theta: Vec<f64>,
    lambda: f64,
    w: [Vec<f64>; 2],
    /// Joint perturbation over all rows, used only by confidence-limit runs.
    q: Option<Vec<f64>>,
}

/// How the joint perturbation moves relative to the bound being computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Perturb {
    /// Pushes the bound further out (`l_{τ_L}`, `u_{τ_U}`).
    Along,
    /// Pushes against the bound (`u_{τ_L}`, `l_{τ_U}`).
    Against,
}

struct QRun {
    mode: Perturb,
    radius: f64,
}

#[derive(Clone, Debug)]
struct Candidate {
    state: Iterate,
    iterate: usize,
    objective: f64,
    residual: f64,
}

struct RunOutput {
    best: Candidate,
    feasible: bool,
    /// Best feasible objective per iterate (signed as `s·Q`), `None` if infeasible.
    history: Vec<Option<f64>>,
    trace: Option<Vec<TraceRecord>>,
    /// Joint perturbation at the last iterate of a confidence-limit run.
    final_q: Option<Vec<f64>>,
}

struct Engine<'a> {
    problem: &'a Problem,
    config: &'a SolverConfig,
    centers: [EmpiricalDistribution; 2],
    tol: f64,
    scale: f64,
    eps_ref: f64,
    /// Spread of the outcome, used to make weight steps unit-free.
    y_scale: f64,
}

impl<'a> Engine<'a> {
    fn new(problem: &'a Problem, config: &'a SolverConfig) -> Result<Self> {
        let scale = problem.loss_scale()?;
        let y = problem.outcomes();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64).sqrt();
        Ok(Self {
            problem,
            config,
            centers: [EmpiricalDistribution::uniform(problem.arms.count(0))?, EmpiricalDistribution::uniform(problem.arms.count(1))?],
            tol: config.tolerance_feas * scale,
            scale,
            eps_ref: problem.eps.max(1e-12 * scale),
            y_scale: if sd > 0.0 { sd } else { 1.0 },
        })
    }

    fn initial_state(&self) -> Result<Iterate> {
        let w = [0, 1].map(|z| self.centers[z].weights().to_vec());
        let a = self.problem.uniform_row_weights();
        let theta = self.problem.fit(&a, None)?;
        Ok(Iterate { theta, lambda: self.config.lambda_init, w, q: None })
    }

    /// Arm weights times the perturbation factor `n·q_i`, which is 1 at the
    /// uniform center.
    fn row_weights(&self, it: &Iterate) -> Vec<f64> {
        let n = self.problem.n as f64;
        let mut a = vec![0.0; self.problem.n];
        for z in 0..2 {
            for (k, &i) in self.problem.arms.rows[z].iter().enumerate() {
                a[i] = it.w[z][k] * it.q.as_ref().map_or(1.0, |q| n * q[i]);
            }
        }
        a
    }

    /// A bound program: a run, then warm restarts. A restart begins at the
    /// best point when the last iterate wandered off it, or at the best
    /// single swap of two rows' weights within an arm. The objective can be
    /// nonconvex in the weights, and a swap keeps the weights feasible while
    /// jumping between vertices that gradient steps do not connect.
    fn solve(&self, start: Iterate, direction: Direction) -> Result<RunOutput> {
        let s = direction.sign();
        let mut out = self.run(start, direction, None)?;
        let mut revisit = true;
        for _ in 0..MAX_RESTARTS {
            if !out.feasible {
                break;
            }
            let settled = out.history.last().copied().flatten().is_some_and(|v| v - s * out.best.objective <= self.stall(out.best.objective));
            let wandered = revisit && !settled;
            let restart = if wandered { Some(out.best.state.clone()) } else { self.best_swap(&out.best, s)? };
            let Some(state) = restart else { break };
            let offset = out.history.len();
            let mut next = self.run(Iterate { q: None, ..state }, direction, None)?;
            let gain = s * (out.best.objective - next.best.objective);
            out.history.append(&mut next.history);
            if let (Some(tr), Some(more)) = (out.trace.as_mut(), next.trace) {
                tr.extend(more.into_iter().map(|r| TraceRecord { iterate: r.iterate + offset, ..r }));
            }
            if !next.feasible || gain <= self.stall(out.best.objective) {
                if wandered {
                    revisit = false;
                    continue;
                }
                break;
            }
            out.best = Candidate { iterate: next.best.iterate + offset, ..next.best };
        }
        Ok(out)
    }

    /// The weights after the most improving transposition within one arm,
    /// scored at the exact weighted MLE. Permutations keep the distance from
    /// the uniform center, so every swap stays feasible. Only arms of up to
    /// `SWAP_ARM_LIMIT` rows are searched.
    fn best_swap(&self, best: &Candidate, s: f64) -> Result<Option<Iterate>> {
        let mut top: Option<(f64, Iterate)> = None;
        for z in 0..2 {
            let w = &best.state.w[z];
            if w.len() > SWAP_ARM_LIMIT {
                continue;
            }
            for i in 0..w.len() {
                for j in i + 1..w.len() {
                    if (w[i] - w[j]).abs() <= 1e-12 {
                        continue;
                    }
                    let mut trial = Iterate { q: None, ..best.state.clone() };
                    trial.w[z].swap(i, j);
                    let a = self.row_weights(&trial);
                    trial.theta = self.problem.fit(&a, Some(&best.state.theta))?;
                    let value = s * self.problem.objective(&trial.theta, &a, None);
                    if value.is_finite() && top.as_ref().map_or(true, |(v, _)| value < *v) {
                        top = Some((value, trial));
                    }
                }
            }
        }
        Ok(top.filter(|(v, _)| *v < s * best.objective - self.stall(best.objective)).map(|(_, it)| it))
    }

    fn stall(&self, objective: f64) -> f64 {
        self.config.tolerance_stall * (1.0 + objective.abs())
    }

    fn run(&self, start: Iterate, direction: Direction, qrun: Option<QRun>) -> Result<RunOutput> {
        let p = self.problem;
        let s = direction.sign();
        let t_max = self.config.iterations;
        let mut it = start;
        if qrun.is_some() && it.q.is_none() {
            it.q = Some(vec![1.0 / p.n as f64; p.n]);
        }
        let q_center = EmpiricalDistribution::uniform(p.n)?;
        let mut star = it.theta.clone();
        let mut best: Option<Candidate> = None;
        let mut least_violation: Option<Candidate> = None;
        let mut last_gain = 0;
        let mut history = Vec::with_capacity(t_max + 1);
        let mut trace = self.config.trace.then(|| Vec::with_capacity(t_max + 1));

        let mut gq_theta = vec![0.0; p.p];
        let mut gq_rows = vec![0.0; p.n];
        let mut gv_rows = vec![0.0; p.n];
        // Weight-step multiplier, halved whenever the objective zigzags.
        let mut damp: f64 = 1.0;
        let mut prev_q: Option<f64> = None;
        let mut prev_delta = 0.0;
        let mut flips = 0;

        for t in 0..=t_max {
            let a = self.row_weights(&it);
            star = p.fit(&a, Some(&star)).map_err(|e| at_iterate(e, t))?;

            // θ moves first, toward the Newton estimate of the stationary
            // point of L at (λ, a_t), expanded around the weighted MLE θ*(a_t):
            // θ* plus a push along s·∇Q of size 1/λ. Only the push is capped.
            // Expanding around θ* rather than θ keeps non-quadratic losses
            // from overshooting when θ sits where the Hessian is flat.
            if self.config.eta_theta > 0.0 {
                gq_theta.iter_mut().for_each(|v| *v = 0.0);
                gq_rows.iter_mut().for_each(|v| *v = 0.0);
                p.objective(&star, &a, Some(Grads { theta: &mut gq_theta, rows: &mut gq_rows }));
                let (_, _, hf) = p.loss_derivatives(&star, &a);
                let lam = it.lambda.max(LAMBDA_FLOOR);
                let push: Vec<f64> = gq_theta.iter().map(|g| s * g).collect();
                let dev = push_step(&hf, lam, &push, p.design.masked_treatment, self.scale).map_err(|e| at_iterate(e, t))?;
                for j in 0..p.p {
                    let target = star[j] - dev[j];
                    it.theta[j] += self.config.eta_theta * (target - it.theta[j]);
                }
            }

            gq_theta.iter_mut().for_each(|v| *v = 0.0);
            gq_rows.iter_mut().for_each(|v| *v = 0.0);
            gv_rows.iter_mut().for_each(|v| *v = 0.0);
            let q = p.objective(&it.theta, &a, Some(Grads { theta: &mut gq_theta, rows: &mut gq_rows }));
            let v = p.constraint(&it.theta, &star, &a, Some(&mut gv_rows));
            let q_star = p.objective(&star, &a, None);
            if !(q.is_finite() && v.is_finite() && q_star.is_finite()) {
                return Err(numerical(t, "objective or constraint is not finite"));
            }
            if gq_theta.iter().chain(&gq_rows).chain(&gv_rows).any(|g| !g.is_finite()) {
                return Err(numerical(t, "gradient is not finite"));
            }
            if let Some(tr) = trace.as_mut() {
                tr.push(TraceRecord { iterate: t, objective: q, residual: v, lambda: it.lambda });
            }

            // Two candidates per iterate: the iterate itself, and its weights
            // paired with the exact weighted MLE (always within the slack).
            let snapped = Candidate {
                state: Iterate { theta: star.clone(), ..it.clone() },
                iterate: t,
                objective: q_star,
                residual: -p.eps,
            };
            let mut round_best = if -p.eps <= self.tol { Some(snapped) } else { None };
            if v <= self.tol && round_best.as_ref().map_or(true, |c| s * q < s * c.objective) {
                round_best = Some(Candidate { state: it.clone(), iterate: t, objective: q, residual: v });
            }
            history.push(round_best.as_ref().map(|c| s * c.objective));
            if let Some(c) = round_best {
                match best.as_ref() {
                    Some(b) if s * c.objective >= s * b.objective => {}
                    Some(b) => {
                        if s * (b.objective - c.objective) > self.config.tolerance_stall * (1.0 + b.objective.abs()) {
                            last_gain = t;
                        }
                        best = Some(c);
                    }
                    None => {
                        last_gain = t;
                        best = Some(c);
                    }
                }
            } else if least_violation.as_ref().map_or(true, |b| v < b.residual) {
                least_violation = Some(Candidate { state: it.clone(), iterate: t, objective: q, residual: v });
            }
            if t == t_max || (self.config.patience > 0 && best.is_some() && t - last_gain >= self.config.patience) {
                break;
            }
            let lam = it.lambda.max(LAMBDA_FLOOR);
            if let Some(last) = prev_q {
                let delta = q - last;
                flips = if delta * prev_delta < 0.0 { flips + 1 } else { 0 };
                if flips >= 3 {
                    damp = (damp * 0.5).max(DAMP_FLOOR);
                    flips = 0;
                }
                prev_delta = delta;
            }
            prev_q = Some(q);

            // λ: multiplicative ascent on v.
            if self.config.eta_lambda > 0.0 {
                let ratio = (v / self.eps_ref).clamp(-1.0, 1.0);
                it.lambda = (it.lambda * (self.config.eta_lambda * ratio).exp()).clamp(LAMBDA_FLOOR, LAMBDA_CEIL);
            }

            // Row-weight gradient of L.
            let g_rows: Vec<f64> = (0..p.n).map(|i| s * gq_rows[i] + lam * gv_rows[i]).collect();
            let mut q_next = None;
            // Joint perturbation: ∂L/∂q_i = n·w_i·∂L/∂a_i, with the factor n
            // folded into the step. Stepped before the arm weights change so
            // both use iterate t.
            let n = p.n as f64;
            if let (Some(qr), Some(qv)) = (qrun.as_ref(), it.q.as_ref()) {
                let dir = match qr.mode {
                    Perturb::Along => 1.0,
                    Perturb::Against => -1.0,
                };
                let eta = 0.5 * (self.config.eta_z[0] + self.config.eta_z[1]);
                let step = damp * eta / (n * self.y_scale);
                let mut moved = vec![0.0; p.n];
                for z in 0..2 {
                    for (k, &i) in p.arms.rows[z].iter().enumerate() {
                        moved[i] = qv[i] - dir * step * it.w[z][k] * g_rows[i];
                    }
                }
                let next = project_feasible_with(&moved, &q_center, qr.radius, self.config.projection)
                    .map_err(|e| at_iterate(e, t))?
                    .into_weights();
                q_next = Some(next);
            }
            for z in 0..2 {
                let nz = p.arms.count(z) as f64;
                let step = damp * self.config.eta_z[z] * n / (nz * nz * self.y_scale);
                if step == 0.0 {
                    continue;
                }
                let moved: Vec<f64> = p.arms.rows[z]
                    .iter()
                    .enumerate()
                    .map(|(k, &i)| {
                        let qi = it.q.as_ref().map_or(1.0, |q| n * q[i]);
                        it.w[z][k] - step * qi * g_rows[i]
                    })
                    .collect();
                it.w[z] = project_feasible_with(&moved, &self.centers[z], self.config.budget.gamma(z), self.config.projection)
                    .map_err(|e| at_iterate(e, t))?
                    .into_weights();
            }
            if q_next.is_some() {
                it.q = q_next;
            }
        }

        let feasible = best.is_some();
        let best = best.or(least_violation).expect("at least one iterate is evaluated");
        Ok(RunOutput { best, feasible, history, trace, final_q: it.q })
    }

    fn finish(&self, out: RunOutput, direction: Direction) -> Result<GdaRun> {
        let c = out.best;
        let weights = WeightTable {
            weights_z0: EmpiricalDistribution::new(c.state.w[0].clone())?,
            weights_z1: EmpiricalDistribution::new(c.state.w[1].clone())?,
        };
        let tv = weights.tv_from_uniform();
        Ok(GdaRun {
            direction,
            state: LagrangeState {
                theta: ModelParams { family: self.problem.spec.model_family(), theta: c.state.theta, sigma: 1.0 },
                lambda: c.state.lambda,
                weights,
                iterate: c.iterate,
            },
            objective: c.objective,
            residual: c.residual,
            feasible: out.feasible,
            tv,
            trace: out.trace,
        })
    }

    fn confidence(&self, lo: &RunOutput, hi: &RunOutput, alpha: f64, workers: Workers) -> Result<ConfidenceLimits> {
        let rho = chi2_quantile(alpha)?;
        let radius = (rho / self.problem.n as f64).min(1.0);
        let jobs = vec![
            (Direction::Lower, Perturb::Along, lo),
            (Direction::Lower, Perturb::Against, lo),
            (Direction::Upper, Perturb::Against, hi),
            (Direction::Upper, Perturb::Along, hi),
        ];
        let results = par::map(jobs, workers, |(dir, mode, base)| -> Result<f64> {
            let start = Iterate { q: None, ..base.best.state.clone() };
            let out = self.run(start, dir, Some(QRun { mode, radius }))?;
            let s = dir.sign();
            let bound = base.best.objective;
            Ok(match mode {
                // The run starts at the bound's own solution, so the outer
                // optimum can only move the bound outward.
                Perturb::Along => {
                    if s > 0.0 {
                        out.best.objective.min(bound)
                    } else {
                        out.best.objective.max(bound)
                    }
                }
                // The inner problem keeps optimizing while the perturbation
                // opposes it: read the inner optimum off the settled tail.
                // The bound's own weights stay feasible for the inner problem,
                // so their value under the final perturbation caps it too.
                Perturb::Against => {
                    let tail = &out.history[out.history.len() - (out.history.len() / 4).max(1)..];
                    let mut inner = tail.iter().flatten().fold(f64::INFINITY, |m, v| m.min(*v));
                    let held = Iterate { q: out.final_q.clone(), ..base.best.state.clone() };
                    let a = self.row_weights(&held);
                    let theta = self.problem.fit(&a, Some(&held.theta))?;
                    inner = inner.min(s * self.problem.objective(&theta, &a, None));
                    let value = if inner.is_finite() { s * inner } else { bound };
                    if s > 0.0 {
                        value.max(bound)
                    } else {
                        value.min(bound)
                    }
                }
            })
        });
        let mut vals = [0.0; 4];
        for (k, r) in results.into_iter().enumerate() {
            vals[k] = r?;
        }
        Ok(ConfidenceLimits { alpha, rho, lower_low: vals[0], lower_high: vals[1], upper_low: vals[2], upper_high: vals[3] })
    }
}

/// `H⁻¹∇f + (λH)⁻¹·push`, with the second term shrunk so that its quadratic
/// cost `½ΔᵀHΔ` stays below `scale`.
/// `H⁻¹·push/λ`, scaled back so its quadratic cost `½·dᵀHd` stays within `scale`.
fn push_step(hf: &DMatrix<f64>, lambda: f64, push: &[f64], masked: bool, scale: f64) -> Result<Vec<f64>> {
    let mut dev = solve_spd(hf.clone(), DVector::from_column_slice(push), masked)? / lambda;
    let quad = 0.5 * (hf * &dev).dot(&dev);
    if quad > scale {
        dev *= (scale / quad).sqrt();
    }
    Ok(dev.iter().copied().collect())
}

fn numerical(iterate: usize, message: &str) -> Error {
    Error::Numerical { iterate, message: message.into() }
}

fn at_iterate(e: Error, t: usize) -> Error {
    match e {
        Error::Numerical { message, .. } => Error::Numerical { iterate: t, message },
        Error::Degenerate(message) => Error::Numerical { iterate: t, message },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Family;

    fn toy() -> ObservedDataset {
        let rows: Vec<Vec<f64>> = [0.1, 0.9, -0.4, 1.3, 0.2, -1.0, 0.7, 0.05].iter().map(|v| vec![*v]).collect();
        let z = vec![1, 1, 1, 1, 0, 0, 0, 0];
        let y: Vec<f64> = rows.iter().zip(&z).map(|(r, &t)| 2.0 * t as f64 + r[0] + 0.1 * r[0] * r[0]).collect();
        ObservedDataset::from_rows(&rows, y, z).unwrap()
    }

    #[test]
    fn chi2_quantile_at_five_percent() {
        assert!((chi2_quantile(0.05).unwrap() - 3.841458820694124).abs() < 1e-9);
    }

    #[test]
    fn lagrangian_hand_example() {
        // Q = 1.5, λ = 2, v = 0.25 → 1.5 + 0.5
        let data = ObservedDataset::from_rows(&[vec![0.0], vec![0.0]], vec![1.0, 1.0], vec![1, 0]).unwrap();
        let spec = EstimatorSpec::backdoor().with_slack(crate::estimators::Slack::Absolute(0.75));
        let theta = ModelParams::new(Family::Linear, vec![0.0, 1.5, 0.0]).unwrap();
        // residuals (1 − 1.5, 1) give f_1 = (0.25 + 1)/2 = 0.625; f_1* = 0
        let state = LagrangeState { theta, lambda: 2.0, weights: WeightTable::uniform(1, 1).unwrap(), iterate: 0 };
        let l = lagrangian(&spec, &state, &data, Direction::Lower).unwrap();
        assert!((l - (1.5 + 2.0 * (0.625 - 0.75))).abs() < 1e-12, "{}", l);
    }

    #[test]
    fn zero_rates_return_initial_state() {
        let data = toy();
        let spec = EstimatorSpec::backdoor();
        let config = SolverConfig { eta_theta: 0.0, eta_lambda: 0.0, eta_z: [0.0, 0.0], iterations: 1, ..SolverConfig::default() }
            .with_budget(0.3)
            .unwrap();
        let run = projected_gda(&spec, &data, &config, Direction::Lower).unwrap();
        let naive = spec.naive_estimate(&data).unwrap();
        assert_eq!(run.state.iterate, 0);
        assert_eq!(run.state.weights, WeightTable::uniform(4, 4).unwrap());
        assert!((run.objective - naive.value).abs() < 1e-12);
    }

    #[test]
    fn zero_budget_collapses() {
        let data = toy();
        let spec = EstimatorSpec::backdoor();
        let r = solve_bounds(&spec, &data, &SolverConfig::default()).unwrap();
        assert!(r.width() <= 1e-3 && (r.tau_lower - r.naive).abs() <= 1e-3, "{:?}", (r.tau_lower, r.tau_upper, r.naive));
    }

    #[test]
    fn interval_widens_with_budget() {
        let data = toy();
        let spec = EstimatorSpec::backdoor();
        let r = solve_bounds(&spec, &data, &SolverConfig::default().with_budget(0.2).unwrap()).unwrap();
        assert!(r.feasible());
        assert!(r.tau_lower < r.naive - 1e-3 && r.tau_upper > r.naive + 1e-3, "{:?}", (r.tau_lower, r.tau_upper, r.naive));
    }
}
