//! Numerical laboratory for KL-regularized policy optimization with linear
//! rewards and posterior Boltzmann policies.
//!
//! The crate models a finite contextual bandit: each context carries a set of
//! actions with feature vectors and a reference policy, rewards are linear in
//! a ground-truth parameter, and the learned policy reweights the reference by
//! `exp(<theta, phi>)`. On top of that it provides
//!
//! - exact objective and gradient evaluation ([`model`], [`gradients`]),
//! - gradient ascent and stochastic gradient ascent with the step schedules
//!   and output-selection rules used throughout ([`optim`]),
//! - spectral and column-space diagnostics of the empirical feature
//!   covariance ([`coverage`]),
//! - environment generators, coverage-probability oracles, and sweep drivers
//!   for the scaling experiments ([`experiments`]),
//! - a self-check suite used by the CLI ([`checks`]).
//!
//! All randomness flows through explicitly seeded ChaCha streams derived with
//! [`rng::mix64`]; identical seeds give identical results on a given build.

pub mod checks;
pub mod config;
pub mod coverage;
pub mod experiments;
pub mod gradients;
pub mod linalg;
pub mod model;
pub mod optim;
pub mod rng;

pub use config::{ExperimentConfig, ExperimentKind};
pub use coverage::CoverageDecomposition;
pub use gradients::CovarianceStat;
pub use model::{Dataset, Environment, ParamVector};
pub use optim::{OptimizerKind, OptimizerTrace};
