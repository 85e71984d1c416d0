//! The JSON run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use ate_bounds::noise::{level_gamma, LogPartition};
use ate_bounds::{DgpSpec, EstimatorSpec, NoiseModel, NoiseSchedule, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; `--seed` overrides it.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub estimator: EstimatorSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub data: Option<DataSource>,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    #[serde(default)]
    pub benchmark: BenchmarkConfig,
    #[serde(default)]
    pub tv: Option<TvRequest>,
    /// `--output` overrides it.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// A dataset CSV with header `z,y,x1,...,xd`.
    Csv(PathBuf),
    Dgp(DgpSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    Model(NoiseModel),
    Level { schedule: NoiseSchedule, level: usize },
}

impl NoiseSpec {
    pub fn model(&self) -> Result<NoiseModel, CliError> {
        match self {
            NoiseSpec::Model(m) => Ok(m.clone()),
            NoiseSpec::Level { schedule, level } => Ok(schedule.model(*level)?),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub schedule: NoiseSchedule,
    /// 1-based levels to run; all levels of the schedule when absent.
    pub levels: Option<Vec<usize>>,
    /// TV budget per entry of `levels`; 0.1 per level when absent.
    pub gammas: Option<Vec<f64>>,
    /// Noiseless datasets per level.
    pub datasets: usize,
    /// Noisy replicates per noiseless dataset.
    pub noise_draws: usize,
    /// Standardize the noisy covariates before solving.
    pub standardize: bool,
    /// Normal quantile of the naive confidence interval.
    pub naive_z: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            schedule: NoiseSchedule::FiveLevel,
            levels: None,
            gammas: None,
            datasets: 10,
            noise_draws: 10,
            standardize: false,
            naive_z: 1.96,
        }
    }
}

impl BenchmarkConfig {
    /// `(level, noise, gamma)` for every level to run.
    pub fn plan(&self) -> Result<Vec<(usize, NoiseModel, f64)>, CliError> {
        let levels = self.levels.clone().unwrap_or_else(|| (1..=self.schedule.levels()).collect());
        if levels.is_empty() {
            return Err(CliError::Config("benchmark.levels is empty".into()));
        }
        let gammas = match &self.gammas {
            Some(g) if g.len() != levels.len() => {
                return Err(CliError::Config(format!("{} gammas for {} levels", g.len(), levels.len())));
            }
            Some(g) => g.clone(),
            None => levels.iter().map(|&l| level_gamma(l)).collect(),
        };
        levels.iter().zip(gammas).map(|(&l, g)| Ok((l, self.schedule.model(l)?, g))).collect()
    }
}

/// What `tv-bound` should compute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum TvRequest {
    Huber { rate: f64 },
    /// Marginal laws of the true and reported value over a shared support.
    Misclassification { p: Vec<f64>, q: Vec<f64> },
    Tilting { theta: Vec<f64>, theta_tilde: Vec<f64>, log_partition: LogPartition },
    /// Histogram estimate per arm from two dataset CSVs, on one covariate column.
    Pinsker {
        noiseless: PathBuf,
        noisy: PathBuf,
        #[serde(default)]
        column: usize,
        #[serde(default = "default_bins")]
        bins: usize,
    },
}

fn default_bins() -> usize {
    20
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {}", path.display(), e)))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.estimator.validate()?;
        self.solver.validate()?;
        if let Some(n) = &self.noise {
            n.model()?.validate()?;
        }
        if self.benchmark.datasets == 0 || self.benchmark.noise_draws == 0 {
            return Err(CliError::Config("replicate counts must be at least 1".into()));
        }
        if !(self.benchmark.naive_z > 0.0) {
            return Err(CliError::Config("benchmark.naive_z must be positive".into()));
        }
        self.benchmark.plan()?;
        let mut paths: Vec<&Path> = Vec::new();
        match &self.data {
            Some(DataSource::Csv(p)) => paths.push(p),
            Some(DataSource::Dgp(spec)) => {
                if let ate_bounds::Dgp::IhdpMediation(m) = &spec.model {
                    paths.push(&m.covariates);
                }
            }
            None => {}
        }
        if let Some(TvRequest::Pinsker { noiseless, noisy, .. }) = &self.tv {
            paths.extend([noiseless.as_path(), noisy.as_path()]);
        }
        for p in paths {
            if !p.is_file() {
                return Err(CliError::Config(format!("{}: file not found", p.display())));
            }
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}
