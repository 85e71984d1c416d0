//! Partial-identification bounds for the average treatment effect when the
//! observed covariates are noisy.
//!
//! The noiseless covariate law is only known to lie within a total-variation
//! ball around the observed one. The library turns a causal plug-in estimator
//! into a distributionally robust program over reweightings of the observed
//! rows and solves it by projected gradient descent–ascent on the Lagrangian,
//! giving an interval `[τ_L, τ_U]` for the ATE.

pub mod csvio;
pub mod dataset;
pub mod datagen;
pub mod empirical;
pub mod error;
pub mod estimators;
pub mod models;
pub mod noise;
pub mod par;
pub mod solver;

pub use dataset::ObservedDataset;
pub use datagen::{Dgp, DgpSpec, LabeledDataset};
pub use empirical::{project_feasible, tv_distance, EmpiricalDistribution, TvBudget, WeightTable};
pub use error::{Error, Result};
pub use estimators::{AteEstimate, BackdoorLaw, EstimatorKind, EstimatorSpec};
pub use models::{Family, ModelParams};
pub use noise::{corrupt, GammaEstimate, NoiseModel, NoiseSchedule};
pub use par::Workers;
pub use solver::{confidence_limits, solve_bounds, solve_bounds_with, BoundResult, ConfidenceLimits, Direction, SolverConfig};
