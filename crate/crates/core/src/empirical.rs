//! Reweightable empirical distributions and the geometry of the TV ball.
//!
//! A candidate noiseless covariate law for arm `z` is a probability vector over
//! the `n_z` observed rows of that arm. The uncertainty set around the observed
//! (uniform) law is the intersection of the probability simplex with an ℓ1 ball
//! of radius `2γ`, since TV distance is half the ℓ1 distance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    weights: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::dim("distribution over zero support rows"));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid(format!("weight {} is {}, expected a nonnegative number", i, weights[i])));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::invalid(format!("weights sum to {}, expected 1", total)));
        }
        Ok(Self { weights })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::dim("distribution over zero support rows"));
        }
        Ok(Self { weights: vec![1.0 / n as f64; n] })
    }

    pub fn support_size(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }
}

/// Per-arm weights over the rows of each treatment arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightTable {
    pub weights_z0: EmpiricalDistribution,
    pub weights_z1: EmpiricalDistribution,
}

impl WeightTable {
    pub fn uniform(n0: usize, n1: usize) -> Result<Self> {
        Ok(Self { weights_z0: EmpiricalDistribution::uniform(n0)?, weights_z1: EmpiricalDistribution::uniform(n1)? })
    }

    pub fn arm(&self, z: usize) -> &EmpiricalDistribution {
        if z == 0 {
            &self.weights_z0
        } else {
            &self.weights_z1
        }
    }

    /// Largest TV distance of either arm from the uniform law on its rows.
    pub fn tv_from_uniform(&self) -> [f64; 2] {
        [0, 1].map(|z| {
            let w = self.arm(z).weights();
            let u = 1.0 / w.len() as f64;
            0.5 * w.iter().map(|v| (v - u).abs()).sum::<f64>()
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvBudget {
    pub gamma_0: f64,
    pub gamma_1: f64,
}

impl TvBudget {
    pub fn new(gamma_0: f64, gamma_1: f64) -> Result<Self> {
        for (z, g) in [(0, gamma_0), (1, gamma_1)] {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::invalid(format!("gamma_{} = {} outside [0, 1]", z, g)));
            }
        }
        Ok(Self { gamma_0, gamma_1 })
    }

    pub fn symmetric(gamma: f64) -> Result<Self> {
        Self::new(gamma, gamma)
    }

    pub fn zero() -> Self {
        Self { gamma_0: 0.0, gamma_1: 0.0 }
    }

    pub fn gamma(&self, z: usize) -> f64 {
        if z == 0 {
            self.gamma_0
        } else {
            self.gamma_1
        }
    }
}

pub fn tv_distance(p: &EmpiricalDistribution, q: &EmpiricalDistribution) -> Result<f64> {
    if p.support_size() != q.support_size() {
        return Err(Error::dim(format!("supports of size {} and {}", p.support_size(), q.support_size())));
    }
    let l1: f64 = p.weights.iter().zip(&q.weights).map(|(a, b)| (a - b).abs()).sum();
    Ok((0.5 * l1).min(1.0))
}

/// Euclidean projection onto the probability simplex (sort-and-threshold).
pub fn project_simplex(w: &[f64]) -> Result<EmpiricalDistribution> {
    check_finite(w)?;
    if w.is_empty() {
        return Err(Error::dim("cannot project an empty vector"));
    }
    let mut sorted = w.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            tau = t;
        }
    }
    let mut out: Vec<f64> = w.iter().map(|v| (v - tau).max(0.0)).collect();
    // Rounding can leave the sum a few ulps away from one.
    let total: f64 = out.iter().sum();
    if total > 0.0 {
        out.iter_mut().for_each(|v| *v /= total);
    }
    Ok(EmpiricalDistribution { weights: out })
}

/// Euclidean projection onto `{v : ‖v − center‖₁ ≤ radius}`.
pub fn project_l1_ball(w: &[f64], center: &[f64], radius: f64) -> Result<Vec<f64>> {
    if !(radius >= 0.0) {
        return Err(Error::invalid(format!("radius {} is negative", radius)));
    }
    if w.len() != center.len() {
        return Err(Error::dim(format!("vector of length {} but center of length {}", w.len(), center.len())));
    }
    check_finite(w)?;
    let d: Vec<f64> = w.iter().zip(center).map(|(a, c)| a - c).collect();
    if d.iter().map(|v| v.abs()).sum::<f64>() <= radius {
        return Ok(w.to_vec());
    }
    if radius == 0.0 {
        return Ok(center.to_vec());
    }
    let mut mags: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in mags.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - radius) / (k + 1) as f64;
        if u > t {
            theta = t;
        }
    }
    Ok(d.iter().zip(center).map(|(v, c)| c + v.signum() * (v.abs() - theta).max(0.0)).collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMethod {
    /// Solves the KKT system of the intersection directly.
    #[default]
    Exact,
    /// Alternating projections with Dykstra's correction terms.
    Dykstra,
}

/// Projection onto the simplex intersected with the TV ball `TV(·, center) ≤ gamma`.
pub fn project_feasible(w: &[f64], center: &EmpiricalDistribution, gamma: f64) -> Result<EmpiricalDistribution> {
    project_feasible_with(w, center, gamma, ProjectionMethod::Exact)
}

pub fn project_feasible_with(
    w: &[f64],
    center: &EmpiricalDistribution,
    gamma: f64,
    method: ProjectionMethod,
) -> Result<EmpiricalDistribution> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::invalid(format!("gamma {} outside [0, 1]", gamma)));
    }
    let c = center.weights();
    if w.len() != c.len() {
        return Err(Error::dim(format!("vector of length {} but center of length {}", w.len(), c.len())));
    }
    check_finite(w)?;
    let weights = match method {
        ProjectionMethod::Exact => {
            let mut out = vec![0.0; w.len()];
            project_intersection(w, c, 2.0 * gamma, &mut out);
            out
        }
        ProjectionMethod::Dykstra => dykstra(w, c, 2.0 * gamma)?,
    };
    Ok(EmpiricalDistribution { weights })
}

fn check_finite(w: &[f64]) -> Result<()> {
    match w.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::invalid(format!("entry {} is not finite", i))),
        None => Ok(()),
    }
}

fn dykstra(w: &[f64], c: &[f64], radius: f64) -> Result<Vec<f64>> {
    let n = w.len();
    let mut x = w.to_vec();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut y = x.clone();
    for _ in 0..5000 {
        let shifted: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + b).collect();
        let prev_y = std::mem::replace(&mut y, project_simplex(&shifted)?.into_weights());
        for i in 0..n {
            p[i] = shifted[i] - y[i];
        }
        let shifted: Vec<f64> = y.iter().zip(&q).map(|(a, b)| a + b).collect();
        let next = project_l1_ball(&shifted, c, radius)?;
        for i in 0..n {
            q[i] = shifted[i] - next[i];
        }
        // Both iterates can repeat for a round while the corrections still drift by x − y,
        // so convergence also needs the two projections to agree.
        let change = next
            .iter()
            .zip(&x)
            .chain(y.iter().zip(&prev_y))
            .chain(next.iter().zip(&y))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        x = next;
        if change < 1e-10 {
            break;
        }
    }
    Ok(y)
}

/// Exact projection of `y` onto `{w ≥ 0, Σw = 1, ‖w − c‖₁ ≤ r}` written into `out`.
///
/// With `d = w − c` and `Σd = 0`, the ℓ1 constraint says the mass moved up,
/// `Σ d⁺`, is at most `r/2`. When it binds, the KKT conditions decouple into
/// an upper threshold `a` with `d_i = (t_i − a)⁺` and a lower threshold `b`
/// with `d_i = −min((b − t_i)⁺, c_i)`, where `t = y − c`. Each threshold is a
/// monotone piecewise-linear equation solved exactly after sorting.
pub(crate) fn project_intersection(y: &[f64], c: &[f64], r: f64, out: &mut [f64]) {
    if r <= 0.0 {
        out.copy_from_slice(c);
        return;
    }
    let budget = 0.5 * r;
    let mu = upper_threshold(y, 1.0);
    for i in 0..y.len() {
        out[i] = (y[i] - mu).max(0.0);
    }
    let moved_up: f64 = out.iter().zip(c).map(|(w, ci)| (w - ci).max(0.0)).sum();
    if moved_up <= budget {
        polish_sum(out, c);
        return;
    }
    let t: Vec<f64> = y.iter().zip(c).map(|(a, b)| a - b).collect();
    let a = upper_threshold(&t, budget);
    let b = lower_threshold(&t, c, budget);
    for i in 0..y.len() {
        out[i] = c[i] + (t[i] - a).max(0.0) - (b - t[i]).max(0.0).min(c[i]);
    }
    polish_sum(out, c);
}

/// The `a` with `Σ (t_i − a)⁺ = mass`, for `mass > 0`.
fn upper_threshold(t: &[f64], mass: f64) -> f64 {
    let mut sorted = t.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut a = sorted[0] - mass;
    for (k, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let cand = (cumsum - mass) / (k + 1) as f64;
        if v > cand {
            a = cand;
        } else {
            break;
        }
    }
    a
}

/// The smallest `b` with `Σ min((b − t_i)⁺, c_i) = mass`, for `0 < mass ≤ Σc`.
fn lower_threshold(t: &[f64], c: &[f64], mass: f64) -> f64 {
    // The sum is zero left of min t, then gains slope 1 at each t_i and loses
    // it again at t_i + c_i.
    let mut events: Vec<(f64, f64)> = Vec::with_capacity(2 * t.len());
    for (ti, ci) in t.iter().zip(c) {
        if *ci > 0.0 {
            events.push((*ti, 1.0));
            events.push((ti + ci, -1.0));
        }
    }
    events.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let (mut value, mut slope, mut at) = (0.0, 0.0, events.first().map_or(0.0, |e| e.0));
    for &(x, ds) in &events {
        let next = value + slope * (x - at);
        if slope > 0.0 && next >= mass {
            return at + (mass - value) / slope;
        }
        value = next;
        at = x;
        slope += ds;
    }
    at
}

/// Spreads the rounding residual of `Σ out = 1` over entries on the side of
/// their center that shrinks the ℓ1 distance, so both constraints stay met.
fn polish_sum(out: &mut [f64], c: &[f64]) {
    let gap = 1.0 - out.iter().sum::<f64>();
    if gap == 0.0 {
        return;
    }
    let toward: Vec<usize> = (0..out.len()).filter(|&i| (c[i] - out[i]) * gap > 0.0).collect();
    let room: f64 = toward.iter().map(|&i| (c[i] - out[i]).abs()).sum();
    if room < gap.abs() {
        return;
    }
    for &i in &toward {
        out[i] += gap * (c[i] - out[i]).abs() / room;
    }
}
