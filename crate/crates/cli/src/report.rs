//! Coverage aggregation for the benchmark harness.

use serde::{Deserialize, Serialize};

/// One noisy replicate: the bound, the naive estimate and whether each covers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub level: usize,
    pub gamma: f64,
    pub dataset: usize,
    pub draw: usize,
    pub dataset_seed: u64,
    pub noise_seed: u64,
    pub true_ate: f64,
    pub naive: Option<f64>,
    /// Naive confidence interval over this dataset's noisy replicates.
    pub naive_ci: Option<[f64; 2]>,
    pub naive_covers: Option<bool>,
    pub tau_lower: Option<f64>,
    pub tau_upper: Option<f64>,
    pub feasible: Option<bool>,
    /// Infeasible bounds never count as covering.
    pub rci_covers: Option<bool>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub estimator: String,
    pub level: usize,
    pub gamma: f64,
    /// `rci` or `naive`.
    pub method: String,
    pub coverage: f64,
    pub standard_error: f64,
    pub mean_width: f64,
    /// Replicates that produced an interval.
    pub replicates: usize,
    /// Replicates that failed and are excluded from `coverage`.
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub dgp: String,
    pub estimator: String,
    pub seed: u64,
    pub datasets: usize,
    pub noise_draws: usize,
    pub rows: Vec<CoverageRow>,
}

impl CoverageReport {
    pub fn row(&self, level: usize, method: &str) -> Option<&CoverageRow> {
        self.rows.iter().find(|r| r.level == level && r.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("estimator,level,gamma,method,coverage,standard_error,mean_width,replicates,failed\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.estimator, r.level, r.gamma, r.method, r.coverage, r.standard_error, r.mean_width, r.replicates, r.failed
            ));
        }
        out
    }
}

/// Coverage row from `(covers, width)` per successful replicate.
pub fn coverage_row(estimator: &str, level: usize, gamma: f64, method: &str, outcomes: &[(bool, f64)], failed: usize) -> CoverageRow {
    let n = outcomes.len();
    let (coverage, mean_width) = if n == 0 {
        (0.0, 0.0)
    } else {
        let hits = outcomes.iter().filter(|(c, _)| *c).count();
        (hits as f64 / n as f64, outcomes.iter().map(|(_, w)| w).sum::<f64>() / n as f64)
    };
    let standard_error = if n == 0 { 0.0 } else { (coverage * (1.0 - coverage) / n as f64).sqrt() };
    CoverageRow {
        estimator: estimator.into(),
        level,
        gamma,
        method: method.into(),
        coverage,
        standard_error,
        mean_width,
        replicates: n,
        failed,
    }
}

/// `mean ± z·sd/√m` over the values, with the sample standard deviation.
pub fn naive_interval(values: &[f64], z: f64) -> Option<[f64; 2]> {
    let m = values.len();
    if m == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / m as f64;
    let sd = if m > 1 { (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64).sqrt() } else { 0.0 };
    let half = z * sd / (m as f64).sqrt();
    Some([mean - half, mean + half])
}
