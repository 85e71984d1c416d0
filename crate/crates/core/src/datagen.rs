//! Seeded synthetic data with a known (or Monte-Carlo) true ATE.
//!
//! Every generator returns the noiseless dataset; [`crate::noise::corrupt`]
//! produces the noisy copies. The Monte-Carlo ground truth uses its own random
//! stream derived from the seed, so it never perturbs the sampled rows.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::ObservedDataset;
use crate::error::{Error, Result};
use crate::models::{sigmoid, PROB_FLOOR};

/// Draws used for Monte-Carlo ground truth.
pub const TRUTH_DRAWS: usize = 1_000_000;

const TRUTH_STREAM: u64 = 0x7472_7574_6800_0001;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSpec {
    pub n: usize,
    pub seed: u64,
    pub model: Dgp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dgp {
    LogisticBackdoor(LogisticBackdoor),
    KangSchafer(KangSchafer),
    FrontdoorSingle(FrontdoorSingle),
    FrontdoorMulti(FrontdoorMulti),
    IhdpMediation(IhdpMediation),
    PartiallyLinear(PartiallyLinear),
}

impl Dgp {
    pub fn name(&self) -> &'static str {
        match self {
            Dgp::LogisticBackdoor(_) => "logistic_backdoor",
            Dgp::KangSchafer(_) => "kang_schafer",
            Dgp::FrontdoorSingle(_) => "frontdoor_single",
            Dgp::FrontdoorMulti(_) => "frontdoor_multi",
            Dgp::IhdpMediation(_) => "ihdp_mediation",
            Dgp::PartiallyLinear(_) => "partially_linear",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticBackdoor {
    pub alpha0: f64,
    pub alpha1: Vec<f64>,
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: Vec<f64>,
}

impl Default for LogisticBackdoor {
    fn default() -> Self {
        Self {
            alpha0: -1.0,
            alpha1: vec![1.0, -1.0, 1.0, 1.0, -1.0],
            beta0: -1.0,
            beta1: 1.0,
            beta2: vec![-1.0, -1.0, -1.0, 1.0, 1.0],
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KsTreatment {
    /// `P(Z = 1) = sigmoid(s)`, the original Kang–Schafer construction.
    #[default]
    Sigmoid,
    /// `P(Z = 1) = min(exp(s), 1)`.
    ClampedExp,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KangSchafer {
    pub treatment: KsTreatment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrontdoorSingle {
    pub a0: f64,
    pub a1: Vec<f64>,
    pub gamma0: f64,
    pub gamma1: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: Vec<f64>,
}

impl Default for FrontdoorSingle {
    fn default() -> Self {
        Self {
            a0: -1.0,
            a1: vec![1.0, -1.0, 1.0, 1.0, -1.0],
            gamma0: 1.0,
            gamma1: 1.0,
            beta0: 1.0,
            beta1: -1.0,
            beta2: vec![-1.0, -1.0, -1.0, 1.0, 1.0],
        }
    }
}

/// Multi-mediator model. Coefficients left as `None` are drawn from the seed:
/// `c1, c2 ~ N(-2, 1)` and `beta ~ N(1, 1)`, one per mediator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrontdoorMulti {
    pub mediators: usize,
    pub c1: Option<Vec<f64>>,
    pub c2: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
}

impl Default for FrontdoorMulti {
    fn default() -> Self {
        Self { mediators: 5, c1: None, c2: None, beta: None }
    }
}

/// Mediator and outcome simulated on an external covariate table `W`.
/// The table's `z` column is the treatment when present; otherwise
/// `Z ~ Bern(sigmoid(W_1))` on the standardized first covariate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IhdpMediation {
    pub covariates: PathBuf,
    pub a: f64,
    pub c: f64,
    pub sigma_m: f64,
    pub b_values: Vec<f64>,
    pub b_probs: Vec<f64>,
}

impl Default for IhdpMediation {
    fn default() -> Self {
        Self {
            covariates: PathBuf::new(),
            a: 10.0,
            c: 1.0,
            sigma_m: 2.0,
            b_values: vec![0.0, 1.0, 2.0, 3.0, 4.0],
            b_probs: vec![0.5, 0.2, 0.15, 0.1, 0.05],
        }
    }
}

/// `y = x·theta0 + effect·z + N(0, 1)`, `x ~ N(0, I)`, `z ~ Bern(sigmoid(x·alpha))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartiallyLinear {
    pub effect: f64,
    pub theta0: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl Default for PartiallyLinear {
    fn default() -> Self {
        Self { effect: 2.0, theta0: vec![1.0, -0.5, 0.5, 1.0, -1.0], alpha: vec![0.5, 0.5, -0.5, 0.0, 0.25] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    /// The noiseless dataset.
    pub data: ObservedDataset,
    pub true_ate: f64,
    /// Monte-Carlo standard error of `true_ate`; `None` when it is exact.
    pub true_ate_se: Option<f64>,
    pub kind: String,
    pub seed: u64,
    /// Coefficients actually used, including any drawn from the seed.
    pub coefficients: BTreeMap<String, Vec<f64>>,
}

impl LabeledDataset {
    pub fn noiseless_covariates(&self) -> &[f64] {
        self.data.covariates()
    }
}

pub fn generate(spec: &DgpSpec) -> Result<LabeledDataset> {
    if spec.n < 2 {
        return Err(Error::invalid(format!("sample size {} is below 2", spec.n)));
    }
    match &spec.model {
        Dgp::LogisticBackdoor(m) => gen_logistic_backdoor(spec.n, spec.seed, m),
        Dgp::KangSchafer(m) => gen_kang_schafer(spec.n, spec.seed, m),
        Dgp::FrontdoorSingle(m) => gen_frontdoor_single(spec.n, spec.seed, m),
        Dgp::FrontdoorMulti(m) => gen_frontdoor_multi(spec.n, spec.seed, m),
        Dgp::IhdpMediation(m) => gen_ihdp_mediation(spec.n, spec.seed, m),
        Dgp::PartiallyLinear(m) => gen_partially_linear(spec.n, spec.seed, m),
    }
}

fn bernoulli(rng: &mut ChaCha8Rng, p: f64) -> u8 {
    let p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    u8::from(rng.random::<f64>() < p)
}

fn normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    let e: f64 = StandardNormal.sample(rng);
    mean + sd * e
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_len(name: &str, v: &[f64], want: usize) -> Result<()> {
    if v.len() != want {
        return Err(Error::dim(format!("{} has {} entries, expected {}", name, v.len(), want)));
    }
    Ok(())
}

fn truth_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ TRUTH_STREAM)
}

/// Mean and standard error of `f` over [`TRUTH_DRAWS`] draws.
fn monte_carlo(seed: u64, mut f: impl FnMut(&mut ChaCha8Rng) -> f64) -> (f64, f64) {
    let mut rng = truth_rng(seed);
    let (mut mean, mut m2) = (0.0, 0.0);
    for k in 0..TRUTH_DRAWS {
        let v = f(&mut rng);
        let delta = v - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (v - mean);
    }
    let n = TRUTH_DRAWS as f64;
    (mean, (m2 / (n - 1.0) / n).sqrt())
}

fn finish(
    data: ObservedDataset,
    truth: (f64, Option<f64>),
    kind: &str,
    seed: u64,
    coefficients: BTreeMap<String, Vec<f64>>,
) -> Result<LabeledDataset> {
    if !truth.0.is_finite() {
        return Err(Error::Degenerate(format!("{}: true ATE is not finite", kind)));
    }
    Ok(LabeledDataset { data, true_ate: truth.0, true_ate_se: truth.1, kind: kind.into(), seed, coefficients })
}

pub fn gen_logistic_backdoor(n: usize, seed: u64, m: &LogisticBackdoor) -> Result<LabeledDataset> {
    let d = m.alpha1.len();
    check_len("beta2", &m.beta2, d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n * d);
    let (mut y, mut z) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let row: Vec<f64> = (0..d).map(|_| normal(&mut rng, 1.0, 1.0)).collect();
        let zi = bernoulli(&mut rng, sigmoid(m.alpha0 + dot(&m.alpha1, &row)));
        let yi = bernoulli(&mut rng, sigmoid(m.beta0 + m.beta1 * zi as f64 + dot(&m.beta2, &row)));
        x.extend(row);
        z.push(zi);
        y.push(yi as f64);
    }
    let (ate, se) = if m.beta1 == 0.0 {
        (0.0, None)
    } else {
        let mut row = vec![0.0; d];
        let (mean, se) = monte_carlo(seed, |r| {
            row.iter_mut().for_each(|v| *v = normal(r, 1.0, 1.0));
            let s = m.beta0 + dot(&m.beta2, &row);
            sigmoid(s + m.beta1) - sigmoid(s)
        });
        (mean, Some(se))
    };
    let coefficients = BTreeMap::from([
        ("alpha0".into(), vec![m.alpha0]),
        ("alpha1".into(), m.alpha1.clone()),
        ("beta0".into(), vec![m.beta0]),
        ("beta1".into(), vec![m.beta1]),
        ("beta2".into(), m.beta2.clone()),
    ]);
    finish(ObservedDataset::new(d, x, y, z)?, (ate, se), "logistic_backdoor", seed, coefficients)
}

pub fn gen_kang_schafer(n: usize, seed: u64, m: &KangSchafer) -> Result<LabeledDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n * 4);
    let (mut y, mut z) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let u: [f64; 4] = std::array::from_fn(|_| normal(&mut rng, 0.0, 1.0));
        x.extend([
            (u[0] / 2.0).exp(),
            u[1] / (1.0 + u[0].exp()) + 10.0,
            (u[0] * u[2] + 0.6).powi(3),
            (u[1] + u[3] + 20.0).powi(2),
        ]);
        let score = -u[0] - 2.0 * u[1] - 0.25 * u[2] - 0.1 * u[3];
        let p = match m.treatment {
            KsTreatment::Sigmoid => sigmoid(score),
            KsTreatment::ClampedExp => score.exp().min(1.0),
        };
        z.push(bernoulli(&mut rng, p));
        y.push(210.0 + 27.4 * u[0] + 13.7 * (u[1] + u[2] + u[3]) + normal(&mut rng, 0.0, 1.0));
    }
    finish(ObservedDataset::new(4, x, y, z)?, (0.0, None), "kang_schafer", seed, BTreeMap::new())
}

pub fn gen_frontdoor_single(n: usize, seed: u64, m: &FrontdoorSingle) -> Result<LabeledDataset> {
    let d = m.a1.len();
    check_len("beta2", &m.beta2, d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut x, mut y, mut z) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let mut u = vec![0.0; d];
    for _ in 0..n {
        u.iter_mut().for_each(|v| *v = normal(&mut rng, 1.0, 1.0));
        let zi = bernoulli(&mut rng, sigmoid(m.a0 + dot(&m.a1, &u)));
        let xi = bernoulli(&mut rng, sigmoid(m.gamma0 + m.gamma1 * zi as f64));
        let yi = bernoulli(&mut rng, sigmoid(m.beta0 + m.beta1 * xi as f64 + dot(&m.beta2, &u)));
        x.push(xi as f64);
        z.push(zi);
        y.push(yi as f64);
    }
    // E[Y(z)] = Σ_x P(x | z) E_U[P(Y = 1 | x, U)], so the contrast factorizes.
    let mediator_shift = sigmoid(m.gamma0 + m.gamma1) - sigmoid(m.gamma0);
    let (ate, se) = if mediator_shift == 0.0 || m.beta1 == 0.0 {
        (0.0, None)
    } else {
        let (mean, se) = monte_carlo(seed, |r| {
            u.iter_mut().for_each(|v| *v = normal(r, 1.0, 1.0));
            let s = m.beta0 + dot(&m.beta2, &u);
            mediator_shift * (sigmoid(s + m.beta1) - sigmoid(s))
        });
        (mean, Some(se))
    };
    let coefficients = BTreeMap::from([
        ("a0".into(), vec![m.a0]),
        ("a1".into(), m.a1.clone()),
        ("gamma0".into(), vec![m.gamma0]),
        ("gamma1".into(), vec![m.gamma1]),
        ("beta0".into(), vec![m.beta0]),
        ("beta1".into(), vec![m.beta1]),
        ("beta2".into(), m.beta2.clone()),
    ]);
    finish(ObservedDataset::new(1, x, y, z)?, (ate, se), "frontdoor_single", seed, coefficients)
}

pub fn gen_frontdoor_multi(n: usize, seed: u64, m: &FrontdoorMulti) -> Result<LabeledDataset> {
    let k = m.mediators;
    if k == 0 {
        return Err(Error::invalid("at least one mediator is needed"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |fixed: &Option<Vec<f64>>, name: &str, mean: f64| -> Result<Vec<f64>> {
        match fixed {
            Some(v) => check_len(name, v, k).map(|_| v.clone()),
            None => Ok((0..k).map(|_| normal(&mut rng, mean, 1.0)).collect()),
        }
    };
    let c1 = draw(&m.c1, "c1", -2.0)?;
    let c2 = draw(&m.c2, "c2", -2.0)?;
    let beta = draw(&m.beta, "beta", 1.0)?;
    let sd_z = 0.5f64.sqrt();

    let mut x = Vec::with_capacity(n * k);
    let (mut y, mut z) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let mut row = vec![0.0; k];
    for _ in 0..n {
        let u = normal(&mut rng, -2.0, 1.0);
        let ez = normal(&mut rng, 0.0, sd_z);
        let zi = bernoulli(&mut rng, sigmoid(u + ez));
        for j in 0..k {
            let p = sigmoid(c1[j] + c2[j] * zi as f64 + normal(&mut rng, -1.0, 1.0));
            row[j] = bernoulli(&mut rng, p) as f64;
        }
        let ey = normal(&mut rng, -1.0, 1.0);
        let yi = bernoulli(&mut rng, sigmoid(2.0 * dot(&beta, &row) + u + ey));
        x.extend_from_slice(&row);
        z.push(zi);
        y.push(yi as f64);
    }

    let (ate, se) = if c2.iter().all(|c| *c == 0.0) {
        (0.0, None)
    } else {
        // Common random numbers across the two interventions.
        let (mut s0, mut s1) = (0.0, 0.0);
        let (mean, se) = monte_carlo(seed, |r| {
            let base = normal(r, -2.0, 1.0) + normal(r, -1.0, 1.0);
            s0 = 0.0;
            s1 = 0.0;
            for j in 0..k {
                let e = normal(r, -1.0, 1.0);
                let v: f64 = r.random();
                if v < sigmoid(c1[j] + e) {
                    s0 += beta[j];
                }
                if v < sigmoid(c1[j] + c2[j] + e) {
                    s1 += beta[j];
                }
            }
            sigmoid(2.0 * s1 + base) - sigmoid(2.0 * s0 + base)
        });
        (mean, Some(se))
    };
    let coefficients = BTreeMap::from([("c1".into(), c1), ("c2".into(), c2), ("beta".into(), beta)]);
    finish(ObservedDataset::new(k, x, y, z)?, (ate, se), "frontdoor_multi", seed, coefficients)
}

/// Reads the covariate table for [`IhdpMediation`]: every column except an
/// optional `z` is a covariate.
pub fn read_covariate_table(path: &Path) -> Result<(Vec<Vec<f64>>, Option<Vec<u8>>)> {
    let (headers, rows) = crate::csvio::read_matrix(path)?;
    if rows.is_empty() {
        return Err(Error::Ingest(format!("{}: no covariate rows", path.display())));
    }
    let zcol = headers.iter().position(|h| h == "z");
    let mut treatment = zcol.map(|_| Vec::with_capacity(rows.len()));
    let mut w = Vec::with_capacity(rows.len());
    for (r, row) in rows.into_iter().enumerate() {
        if let (Some(c), Some(t)) = (zcol, treatment.as_mut()) {
            match row[c] {
                v if v == 0.0 || v == 1.0 => t.push(v as u8),
                v => return Err(Error::Ingest(format!("row {}, column z: {} is not 0 or 1", r + 1, v))),
            }
        }
        w.push(row.into_iter().enumerate().filter(|(c, _)| Some(*c) != zcol).map(|(_, v)| v).collect::<Vec<_>>());
    }
    if w[0].is_empty() {
        return Err(Error::Ingest(format!("{}: no covariate columns", path.display())));
    }
    Ok((w, treatment))
}

pub fn gen_ihdp_mediation(n: usize, seed: u64, m: &IhdpMediation) -> Result<LabeledDataset> {
    let (w, treatment) = read_covariate_table(&m.covariates)?;
    gen_ihdp_mediation_from(n, seed, m, &w, treatment.as_deref())
}

/// As [`gen_ihdp_mediation`] with the covariate table already in memory.
/// Uses the first `n` rows.
pub fn gen_ihdp_mediation_from(
    n: usize,
    seed: u64,
    m: &IhdpMediation,
    w: &[Vec<f64>],
    treatment: Option<&[u8]>,
) -> Result<LabeledDataset> {
    if n > w.len() {
        return Err(Error::invalid(format!("asked for {} rows but the covariate table has {}", n, w.len())));
    }
    let p = w.first().map_or(0, Vec::len);
    if p == 0 || w.iter().any(|r| r.len() != p) {
        return Err(Error::Ingest("covariate table is empty or ragged".into()));
    }
    if treatment.is_some_and(|t| t.len() != w.len()) {
        return Err(Error::dim("treatment column length differs from the covariate table"));
    }
    if !(m.sigma_m > 0.0) {
        return Err(Error::invalid(format!("mediator std {} must be positive", m.sigma_m)));
    }
    check_len("b_probs", &m.b_probs, m.b_values.len())?;
    let picker = WeightedIndex::new(&m.b_probs).map_err(|e| Error::invalid(e.to_string()))?;

    let table = ObservedDataset::from_rows(&w[..n], vec![0.0; n], vec![0; n])?.standardized();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b: Vec<f64> = (0..p).map(|_| m.b_values[picker.sample(&mut rng)]).collect();
    let mediator = Normal::new(0.0, m.sigma_m).map_err(|e| Error::invalid(e.to_string()))?;
    let (mut x, mut y, mut z) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let wi = table.row(i);
        let zi = match treatment {
            Some(t) => t[i],
            None => bernoulli(&mut rng, sigmoid(wi[0])),
        };
        let xi = m.c * zi as f64 + mediator.sample(&mut rng);
        x.push(xi);
        z.push(zi);
        y.push(m.a * xi + dot(&b, wi) + normal(&mut rng, 0.0, 1.0));
    }
    let coefficients = BTreeMap::from([
        ("a".into(), vec![m.a]),
        ("c".into(), vec![m.c]),
        ("sigma_m".into(), vec![m.sigma_m]),
        ("b".into(), b),
    ]);
    finish(ObservedDataset::new(1, x, y, z)?, (m.c * m.a, None), "ihdp_mediation", seed, coefficients)
}

/// A stand-in for the 25-covariate IHDP table: 6 standard normal columns
/// followed by 19 binary columns with varying prevalence.
pub fn synthetic_covariate_table(rows: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prevalence: Vec<f64> = (0..19).map(|j| 0.1 + 0.8 * ((j * 7) % 19) as f64 / 18.0).collect();
    (0..rows)
        .map(|_| {
            let mut r: Vec<f64> = (0..6).map(|_| normal(&mut rng, 0.0, 1.0)).collect();
            r.extend(prevalence.iter().map(|&q| bernoulli(&mut rng, q) as f64));
            r
        })
        .collect()
}

pub fn gen_partially_linear(n: usize, seed: u64, m: &PartiallyLinear) -> Result<LabeledDataset> {
    let d = m.theta0.len();
    check_len("alpha", &m.alpha, d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n * d);
    let (mut y, mut z) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let mut row = vec![0.0; d];
    for _ in 0..n {
        row.iter_mut().for_each(|v| *v = normal(&mut rng, 0.0, 1.0));
        let zi = bernoulli(&mut rng, sigmoid(dot(&m.alpha, &row)));
        y.push(dot(&m.theta0, &row) + m.effect * zi as f64 + normal(&mut rng, 0.0, 1.0));
        x.extend_from_slice(&row);
        z.push(zi);
    }
    let coefficients = BTreeMap::from([
        ("effect".into(), vec![m.effect]),
        ("theta0".into(), m.theta0.clone()),
        ("alpha".into(), m.alpha.clone()),
    ]);
    finish(ObservedDataset::new(d, x, y, z)?, (m.effect, None), "partially_linear", seed, coefficients)
}
