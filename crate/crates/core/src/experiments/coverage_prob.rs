//! Coverage probability of the orthonormal-basis sampler: the chance that
//! `n` i.i.d. draws hit all `d` basis directions. Exact values come from
//! inclusion-exclusion over the missed subsets; a seeded Monte Carlo
//! estimator covers dimensions where the exact sum is off the table.

use super::ExperimentError;
use crate::rng::{mix64, stream_rng};
use rand::Rng;

/// Largest dimension the inclusion-exclusion oracle accepts.
pub const MAX_EXACT_DIM: usize = 12;

/// Exact coverage probability by inclusion-exclusion.
///
/// The sampler has `d-1` directions of weight `(1-p)/(d-1)` and one of
/// weight `p`, so subsets of missed directions only enter through their size
/// and whether they contain the rare direction:
///
/// `P = sum_{k=0}^{d-1} sum_{j=0}^{1} (-1)^{k+j} C(d-1,k) (1 - k q - j p)^n`.
pub fn exact_coverage_probability(d: usize, p: f64, n: usize) -> Result<f64, ExperimentError> {
    if d < 2 || !(p > 0.0 && p < 1.0) {
        return Err(ExperimentError::InvalidParam(format!(
            "need d >= 2 and p in (0,1), got d = {d}, p = {p}"
        )));
    }
    if d > MAX_EXACT_DIM {
        return Err(ExperimentError::CoverageDimTooLarge {
            d,
            max: MAX_EXACT_DIM,
        });
    }
    if n < d {
        return Ok(0.0);
    }
    let q = (1.0 - p) / (d - 1) as f64;
    let mut total = 0.0f64;
    let mut binom = 1.0f64; // C(d-1, k)
    for k in 0..d {
        for j in 0..=1usize {
            let mass_left = 1.0 - k as f64 * q - j as f64 * p;
            let sign = if (k + j) % 2 == 0 { 1.0 } else { -1.0 };
            let term = if mass_left <= 0.0 {
                0.0
            } else {
                mass_left.powi(n as i32)
            };
            total += sign * binom * term;
        }
        binom *= (d - 1 - k) as f64 / (k + 1) as f64;
    }
    Ok(total.clamp(0.0, 1.0))
}

/// Monte Carlo coverage probability over `m_trials` independent trials.
///
/// Returns `(fraction covered, sqrt(q(1-q)/m))`. Each trial draws `n`
/// directions and records success when all `d` appeared; trials use the
/// stream `mix64(master_seed, trial)` scheme so the estimate is reproducible.
pub fn mc_coverage_probability(
    d: usize,
    p: f64,
    n: usize,
    m_trials: usize,
    master_seed: u64,
) -> Result<(f64, f64), ExperimentError> {
    if d < 2 || d > 64 || !(p > 0.0 && p < 1.0) {
        return Err(ExperimentError::InvalidParam(format!(
            "need 2 <= d <= 64 and p in (0,1), got d = {d}, p = {p}"
        )));
    }
    if m_trials < 100 {
        return Err(ExperimentError::InvalidParam(format!(
            "need at least 100 trials, got {m_trials}"
        )));
    }
    let q = (1.0 - p) / (d - 1) as f64;
    let full: u64 = if d == 64 { u64::MAX } else { (1u64 << d) - 1 };
    let mut rng = stream_rng(mix64(master_seed, 0xC0FE), 0);
    let mut covered = 0usize;
    for _ in 0..m_trials {
        let mut mask = 0u64;
        for _ in 0..n {
            let u: f64 = rng.random();
            let idx = if u >= 1.0 - p {
                d - 1
            } else {
                ((u / q) as usize).min(d - 2)
            };
            mask |= 1u64 << idx;
            if mask == full {
                break;
            }
        }
        if mask == full {
            covered += 1;
        }
    }
    let q_hat = covered as f64 / m_trials as f64;
    let se = (q_hat * (1.0 - q_hat) / m_trials as f64).sqrt();
    Ok((q_hat, se))
}
