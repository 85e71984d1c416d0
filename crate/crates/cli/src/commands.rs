use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ate_bounds::csvio::{read_dataset, write_dataset};
use ate_bounds::noise::{gamma_huber, gamma_misclassification, gamma_pinsker, gamma_tilting};
use ate_bounds::solver::GdaRun;
use ate_bounds::{
    corrupt, datagen, par, solve_bounds_with, ConfidenceLimits, DgpSpec, GammaEstimate, LabeledDataset, NoiseModel, ObservedDataset,
    TvBudget, Workers,
};
use serde::{Deserialize, Serialize};

use crate::config::{DataSource, RunConfig, TvRequest};
use crate::report::{coverage_row, naive_interval, CoverageReport, ReplicateRecord};
use crate::{mix_seed, CliError};

const NOISE_SALT: u64 = 0x6e6f_6973_65;
const DATASET_SALT: u64 = 0x6461_7461;

/// Global flags shared by every subcommand.
#[derive(Clone, Debug, Default)]
pub struct Options {
    pub seed: Option<u64>,
    /// 0 uses every available core, 1 runs sequentially.
    pub workers: usize,
    pub output: Option<PathBuf>,
}

impl Options {
    fn seed(&self, config: &RunConfig) -> u64 {
        self.seed.unwrap_or_else(|| config.seed())
    }

    fn output(&self, config: &RunConfig) -> Option<PathBuf> {
        self.output.clone().or_else(|| config.output.clone())
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn dgp_spec(config: &RunConfig, opts: &Options) -> Result<DgpSpec, CliError> {
    match &config.data {
        Some(DataSource::Dgp(spec)) => {
            let mut spec = spec.clone();
            if let Some(seed) = opts.seed.or(config.seed) {
                spec.seed = seed;
            }
            Ok(spec)
        }
        _ => Err(CliError::Config("this command needs data.dgp".into())),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateMetadata {
    pub dgp: DgpSpec,
    pub kind: String,
    pub seed: u64,
    pub n: usize,
    pub true_ate: f64,
    pub true_ate_se: Option<f64>,
    pub coefficients: BTreeMap<String, Vec<f64>>,
    pub noise: Option<NoiseModel>,
    pub noise_seed: Option<u64>,
    pub noiseless_csv: String,
    pub noisy_csv: Option<String>,
}

/// Writes `noiseless.csv`, `noisy.csv` (when a noise model is given) and
/// `metadata.json` into the output directory.
pub fn cmd_generate(config: &RunConfig, opts: &Options) -> Result<GenerateMetadata, CliError> {
    let spec = dgp_spec(config, opts)?;
    let dir = opts.output(config).unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    let labeled = datagen::generate(&spec)?;
    write_dataset(&dir.join("noiseless.csv"), &labeled.data)?;

    let noise = config.noise.as_ref().map(|n| n.model()).transpose()?;
    let noise_seed = noise.as_ref().map(|_| mix_seed(spec.seed, NOISE_SALT));
    if let (Some(model), Some(seed)) = (&noise, noise_seed) {
        write_dataset(&dir.join("noisy.csv"), &corrupt(&labeled.data, model, seed)?)?;
    }
    let meta = GenerateMetadata {
        kind: labeled.kind.clone(),
        seed: spec.seed,
        n: spec.n,
        true_ate: labeled.true_ate,
        true_ate_se: labeled.true_ate_se,
        coefficients: labeled.coefficients.clone(),
        noise,
        noise_seed,
        noiseless_csv: "noiseless.csv".into(),
        noisy_csv: noise_seed.map(|_| "noisy.csv".into()),
        dgp: spec,
    };
    write_json(&dir.join("metadata.json"), &meta)?;
    Ok(meta)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideDiagnostics {
    pub objective: f64,
    pub residual: f64,
    pub feasible: bool,
    pub iterate: usize,
    pub lambda: f64,
    pub tv: [f64; 2],
}

impl From<&GdaRun> for SideDiagnostics {
    fn from(run: &GdaRun) -> Self {
        Self {
            objective: run.objective,
            residual: run.residual,
            feasible: run.feasible,
            iterate: run.state.iterate,
            lambda: run.state.lambda,
            tv: run.tv,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub estimator: String,
    pub budget: TvBudget,
    pub n: usize,
    pub tau_lower: f64,
    pub tau_upper: f64,
    pub naive: f64,
    pub feasible_lower: bool,
    pub feasible_upper: bool,
    pub confidence: Option<ConfidenceLimits>,
    pub lower: SideDiagnostics,
    pub upper: SideDiagnostics,
    /// Known when the data came from a generator.
    pub true_ate: Option<f64>,
}

impl BoundReport {
    pub fn feasible(&self) -> bool {
        self.feasible_lower && self.feasible_upper
    }
}

/// Loads the dataset named by `data`, applying `noise` when configured.
fn load_data(config: &RunConfig, opts: &Options) -> Result<(ObservedDataset, Option<f64>), CliError> {
    let (data, truth, seed) = match &config.data {
        Some(DataSource::Csv(path)) => (read_dataset(path)?, None, opts.seed(config)),
        Some(DataSource::Dgp(_)) => {
            let spec = dgp_spec(config, opts)?;
            let l = datagen::generate(&spec)?;
            (l.data, Some(l.true_ate), spec.seed)
        }
        None => return Err(CliError::Config("missing data: give data.csv or data.dgp".into())),
    };
    let data = match &config.noise {
        Some(n) => corrupt(&data, &n.model()?, mix_seed(seed, NOISE_SALT))?,
        None => data,
    };
    Ok((data, truth))
}

pub fn cmd_bound(config: &RunConfig, opts: &Options) -> Result<BoundReport, CliError> {
    let (data, true_ate) = load_data(config, opts)?;
    let r = solve_bounds_with(&config.estimator, &data, &config.solver, Workers(opts.workers))?;
    Ok(BoundReport {
        estimator: config.estimator.kind.name().into(),
        budget: config.solver.budget,
        n: data.len(),
        tau_lower: r.tau_lower,
        tau_upper: r.tau_upper,
        naive: r.naive,
        feasible_lower: r.lower.feasible,
        feasible_upper: r.upper.feasible,
        confidence: r.confidence,
        lower: (&r.lower).into(),
        upper: (&r.upper).into(),
        true_ate,
    })
}

pub fn cmd_tv_bound(config: &RunConfig, _opts: &Options) -> Result<GammaEstimate, CliError> {
    let request = config.tv.as_ref().ok_or_else(|| CliError::Config("missing tv section".into()))?;
    Ok(match request {
        TvRequest::Huber { rate } => gamma_huber(*rate)?,
        TvRequest::Misclassification { p, q } => gamma_misclassification(p, q)?,
        TvRequest::Tilting { theta, theta_tilde, log_partition } => {
            gamma_tilting(theta, theta_tilde, |t| log_partition.value_and_grad(t))?
        }
        TvRequest::Pinsker { noiseless, noisy, column, bins } => {
            let (a, b) = (read_dataset(noiseless)?, read_dataset(noisy)?);
            if *column >= a.dim() || *column >= b.dim() {
                return Err(CliError::Config(format!("column {} outside the covariates", column)));
            }
            let arm = |d: &ObservedDataset, z: u8| -> Vec<f64> { d.arm_rows(z).iter().map(|&i| d.row(i)[*column]).collect() };
            let e0 = gamma_pinsker(&arm(&a, 0), &arm(&b, 0), *bins)?;
            let e1 = gamma_pinsker(&arm(&a, 1), &arm(&b, 1), *bins)?;
            GammaEstimate::per_arm(e0, e1)
        }
    })
}

struct Job {
    level: usize,
    gamma: f64,
    model: NoiseModel,
    dataset: usize,
    draw: usize,
    noise_seed: u64,
}

struct JobOutput {
    naive: Result<f64, String>,
    bound: Result<(f64, f64, bool), String>,
}

/// Runs `D × R` replicates per noise level and writes `coverage.json`,
/// `coverage.csv` and `replicates.jsonl` into the output directory.
pub fn cmd_benchmark(config: &RunConfig, opts: &Options) -> Result<CoverageReport, CliError> {
    let base = dgp_spec(config, opts)?;
    let master = base.seed;
    let bench = &config.benchmark;
    let plan = bench.plan()?;
    let dir = opts.output(config).unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    let workers = Workers(opts.workers);

    let specs: Vec<DgpSpec> = (0..bench.datasets).map(|d| DgpSpec { seed: mix_seed(master, DATASET_SALT + d as u64), ..base.clone() }).collect();
    let datasets: Vec<LabeledDataset> = par::map(specs.clone(), workers, |s| datagen::generate(&s)).into_iter().collect::<Result<_, _>>()?;

    let mut jobs = Vec::new();
    for (level, model, gamma) in &plan {
        for dataset in 0..bench.datasets {
            for draw in 0..bench.noise_draws {
                let noise_seed = mix_seed(mix_seed(mix_seed(master, NOISE_SALT), *level as u64), (dataset * bench.noise_draws + draw) as u64);
                jobs.push(Job { level: *level, gamma: *gamma, model: model.clone(), dataset, draw, noise_seed });
            }
        }
    }
    let outputs = par::map(jobs.iter().collect(), workers, |job| run_replicate(config, &datasets[job.dataset], job));

    // Naive intervals pool the noisy replicates of one noiseless dataset.
    let mut naive_ci: BTreeMap<(usize, usize), Option<[f64; 2]>> = BTreeMap::new();
    for (level, _, _) in &plan {
        for d in 0..bench.datasets {
            let values: Vec<f64> = jobs
                .iter()
                .zip(&outputs)
                .filter(|(j, _)| j.level == *level && j.dataset == d)
                .filter_map(|(_, o)| o.naive.as_ref().ok().copied())
                .collect();
            naive_ci.insert((*level, d), naive_interval(&values, bench.naive_z));
        }
    }

    let mut records = Vec::with_capacity(jobs.len());
    for (job, out) in jobs.iter().zip(&outputs) {
        let truth = datasets[job.dataset].true_ate;
        let ci = out.naive.as_ref().ok().and_then(|_| naive_ci[&(job.level, job.dataset)]);
        let mut errors = Vec::new();
        if let Err(e) = &out.naive {
            errors.push(format!("naive: {}", e));
        }
        let bound = match &out.bound {
            Ok(b) => Some(*b),
            Err(e) => {
                errors.push(format!("bound: {}", e));
                None
            }
        };
        records.push(ReplicateRecord {
            level: job.level,
            gamma: job.gamma,
            dataset: job.dataset,
            draw: job.draw,
            dataset_seed: specs[job.dataset].seed,
            noise_seed: job.noise_seed,
            true_ate: truth,
            naive: out.naive.as_ref().ok().copied(),
            naive_ci: ci,
            naive_covers: ci.map(|[lo, hi]| lo <= truth && truth <= hi),
            tau_lower: bound.map(|b| b.0),
            tau_upper: bound.map(|b| b.1),
            feasible: bound.map(|b| b.2),
            rci_covers: bound.map(|(lo, hi, ok)| ok && lo <= truth && truth <= hi),
            error: (!errors.is_empty()).then(|| errors.join("; ")),
        });
    }

    let report = aggregate(config, &base, master, &plan, &records);
    let mut lines = String::new();
    for r in &records {
        lines.push_str(&serde_json::to_string(r).map_err(|e| CliError::Config(e.to_string()))?);
        lines.push('\n');
    }
    std::fs::write(dir.join("replicates.jsonl"), lines)?;
    write_json(&dir.join("coverage.json"), &report)?;
    std::fs::write(dir.join("coverage.csv"), report.to_csv())?;
    Ok(report)
}

fn run_replicate(config: &RunConfig, labeled: &LabeledDataset, job: &Job) -> JobOutput {
    let noisy = match corrupt(&labeled.data, &job.model, job.noise_seed) {
        Ok(d) if config.benchmark.standardize => d.standardized(),
        Ok(d) => d,
        Err(e) => return JobOutput { naive: Err(e.to_string()), bound: Err(e.to_string()) },
    };
    let naive = config.estimator.naive_estimate(&noisy).map(|a| a.value).map_err(|e| e.to_string());
    let bound = config
        .solver
        .clone()
        .with_budget(job.gamma)
        .and_then(|solver| solve_bounds_with(&config.estimator, &noisy, &solver, Workers::sequential()))
        .map(|r| (r.tau_lower, r.tau_upper, r.feasible()))
        .map_err(|e| e.to_string());
    JobOutput { naive, bound }
}

/// Recomputes every coverage number from the per-replicate records.
pub fn aggregate(config: &RunConfig, base: &DgpSpec, seed: u64, plan: &[(usize, NoiseModel, f64)], records: &[ReplicateRecord]) -> CoverageReport {
    let estimator = config.estimator.kind.name();
    let mut rows = Vec::new();
    for (level, _, gamma) in plan {
        let at: Vec<&ReplicateRecord> = records.iter().filter(|r| r.level == *level).collect();
        let rci: Vec<(bool, f64)> = at
            .iter()
            .filter_map(|r| Some((r.rci_covers?, r.tau_upper? - r.tau_lower?)))
            .collect();
        rows.push(coverage_row(estimator, *level, *gamma, "rci", &rci, at.len() - rci.len()));
        let naive: Vec<(bool, f64)> = at
            .iter()
            .filter_map(|r| {
                let [lo, hi] = r.naive_ci?;
                Some((r.naive_covers?, hi - lo))
            })
            .collect();
        rows.push(coverage_row(estimator, *level, *gamma, "naive", &naive, at.len() - naive.len()));
    }
    CoverageReport {
        dgp: base.model.name().into(),
        estimator: estimator.into(),
        seed,
        datasets: config.benchmark.datasets,
        noise_draws: config.benchmark.noise_draws,
        rows,
    }
}
