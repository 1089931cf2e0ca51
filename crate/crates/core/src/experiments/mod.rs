//! Environment generators and sweep drivers for the scaling experiments,
//! plus coverage-probability oracles, stability estimation, and rate fits.
//!
//! Every sweep is deterministic given its configuration and master seed: each
//! `(sweep point, replicate)` task owns a derived RNG stream (see
//! [`crate::rng`]) and the reports are assembled by an ordered reduction, so
//! thread count never changes the output.

mod coverage_prob;
mod fits;
mod generators;
mod stability;
mod sweeps;

pub use coverage_prob::{exact_coverage_probability, mc_coverage_probability, MAX_EXACT_DIM};
pub use fits::{fit_linear, fit_loglog_slope, FitRecord};
pub use generators::{gen_env_orthonormal, gen_env_random, gen_env_rank_deficient};
pub use stability::{estimate_stability, sweep_stability, StabilityEstimate, StabilityReport, StabilityRow};
pub use sweeps::{
    geometric_checkpoints, pooled_env_and_sets, sweep_coverage, sweep_gap_vs_n, sweep_gap_vs_t,
    CoverageReport, CoverageRow, GapSample, GapVsNReport, GapVsNRow, GapVsTReport, GapVsTRow,
    MethodFit,
};

use crate::model::ModelError;
use crate::optim::OptimError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("exact coverage probability supports d <= {max} (got d = {d}); use the Monte Carlo estimator")]
    CoverageDimTooLarge { d: usize, max: usize },
    #[error("rate fit needs at least {min} points, all strictly positive")]
    BadFitInput { min: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Optim(#[from] OptimError),
}

/// Which training route produced a result row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Stationary-point proxy (gradient norm driven below tolerance).
    Stat,
    Ga,
    Sga,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Stat, Method::Ga, Method::Sga];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Stat => "STAT",
            Method::Ga => "GA",
            Method::Sga => "SGA",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Reproducibility block attached to every report.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub master_seed: u64,
    /// Canonical key=value echo of the resolved configuration.
    pub config_echo: String,
    /// FNV-1a hash of `config_echo`.
    pub config_hash: u64,
    pub tool_version: String,
}

impl Provenance {
    pub fn new(master_seed: u64, config_echo: String) -> Self {
        let config_hash = crate::config::fnv1a64(config_echo.as_bytes());
        Provenance {
            master_seed,
            config_echo,
            config_hash,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}
