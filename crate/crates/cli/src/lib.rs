//! Command implementations behind the `ate-bounds` binary: dataset generation,
//! bound computation, TV-budget calculators and the coverage benchmark.

pub mod commands;
pub mod config;
pub mod report;

pub use commands::{cmd_benchmark, cmd_bound, cmd_generate, cmd_tv_bound, Options};
pub use config::RunConfig;
pub use report::{CoverageReport, CoverageRow, ReplicateRecord};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] ate_bounds::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bounds infeasible: {0}")]
    Infeasible(String),
}

impl CliError {
    /// 2 for configuration and input problems, 3 for numerical failures,
    /// 4 when a bound could not satisfy its constraint.
    pub fn exit_code(&self) -> u8 {
        use ate_bounds::Error as E;
        match self {
            CliError::Core(E::Numerical { .. } | E::Degenerate(_)) => 3,
            CliError::Infeasible(_) => 4,
            _ => 2,
        }
    }
}

/// SplitMix64 step, used to derive independent child seeds from a master seed.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
