//! Environment generators: the orthonormal-basis full-coverage family, the
//! rank-deficient subspace family, and small random instances for the
//! property checks.

use super::ExperimentError;
use crate::linalg::norm2;
use crate::model::{ContextSpec, Environment};
use crate::rng::{mix64, stream_rng};
use rand::Rng;
use rand_distr::StandardNormal;

fn unit_ball_sample<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = norm2(&v);
        if norm > 1e-12 {
            let u: f64 = rng.random();
            let scale = u.powf(1.0 / dim as f64) / norm;
            for x in &mut v {
                *x *= scale;
            }
            return v;
        }
    }
}

/// Full-coverage family: contexts are the `d` standard basis vectors, each
/// with the action pair `phi = (x, -x)` and a uniform two-action reference.
/// The last direction is sampled with probability `p`, the rest uniformly
/// with `(1-p)/(d-1)` each. `theta_star` is uniform in the unit ball, so
/// `C = D = 1`.
///
/// The empirical covariance of a sample is positive definite exactly when
/// every basis direction appears at least once, which reduces
/// positive-definiteness checks to a coupon-collector coverage event.
pub fn gen_env_orthonormal(d: usize, p: f64, seed: u64) -> Result<Environment, ExperimentError> {
    if d < 2 {
        return Err(ExperimentError::InvalidParam(format!(
            "orthonormal family needs d >= 2 (got {d})"
        )));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(ExperimentError::InvalidParam(format!(
            "rare-direction probability must lie in (0,1), got {p}"
        )));
    }
    let mut rng = stream_rng(seed, crate::rng::role::ENV);
    let mut specs = Vec::with_capacity(d);
    for i in 0..d {
        let mut plus = vec![0.0; d];
        plus[i] = 1.0;
        let mut minus = vec![0.0; d];
        minus[i] = -1.0;
        specs.push(ContextSpec {
            features: vec![plus, minus],
            ref_probs: vec![0.5, 0.5],
        });
    }
    let common = (1.0 - p) / (d - 1) as f64;
    let mut weights = vec![common; d];
    weights[d - 1] = p;
    let theta_star = unit_ball_sample(d, &mut rng);
    Ok(Environment::new(specs, theta_star, 1.0, 1.0, Some(weights))?)
}

/// Rank-deficient family: a pool of `pool_size` contexts, each a
/// unit-normalized Gaussian vector `x` with two actions whose features are
/// the projections of `x` onto two distinct effective-subspace coordinates
/// (`phi_u = x[u] e_u`, `phi_v = x[v] e_v` with `u, v < d_eff`).
/// `theta_star` is a unit vector inside the effective subspace and the
/// context law is uniform over the pool.
///
/// `D = 1` and `C` is the realized supremum of the feature norms over the
/// pool (the pool is the population, so this is the exact sup). Using the
/// tight bound matters: the optimizer step sizes scale with `1/L_f` and
/// `L_f` is cubic in `C`, so a slack bound would slow every gradient method
/// far below the curvature the environment actually has.
///
/// Draws nearly orthogonal to the effective subspace are rejected and
/// redrawn.
pub fn gen_env_rank_deficient(
    d: usize,
    d_eff: usize,
    pool_size: usize,
    seed: u64,
) -> Result<Environment, ExperimentError> {
    if d_eff < 2 || d_eff > d {
        return Err(ExperimentError::InvalidParam(format!(
            "need 2 <= d_eff <= d (got d_eff = {d_eff}, d = {d})"
        )));
    }
    if pool_size == 0 {
        return Err(ExperimentError::InvalidParam(
            "pool size must be positive".into(),
        ));
    }
    let mut rng = stream_rng(seed, crate::rng::role::ENV);
    let mut theta_star = vec![0.0; d];
    {
        let mut g: Vec<f64> = (0..d_eff).map(|_| rng.sample(StandardNormal)).collect();
        let norm = norm2(&g);
        for v in &mut g {
            *v /= norm;
        }
        theta_star[..d_eff].copy_from_slice(&g);
    }
    let mut specs = Vec::with_capacity(pool_size);
    let mut feature_sup = 0.0f64;
    for _ in 0..pool_size {
        let x = loop {
            let mut x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let norm = norm2(&x);
            if norm < 1e-12 {
                continue;
            }
            for v in &mut x {
                *v /= norm;
            }
            let in_subspace = norm2(&x[..d_eff]);
            if in_subspace >= 1e-6 {
                break x;
            }
        };
        let u = rng.random_range(0..d_eff);
        let v = loop {
            let v = rng.random_range(0..d_eff);
            if v != u {
                break v;
            }
        };
        feature_sup = feature_sup.max(x[u].abs()).max(x[v].abs());
        let mut phi_u = vec![0.0; d];
        phi_u[u] = x[u];
        let mut phi_v = vec![0.0; d];
        phi_v[v] = x[v];
        specs.push(ContextSpec {
            features: vec![phi_u, phi_v],
            ref_probs: vec![0.5, 0.5],
        });
    }
    Ok(Environment::new(specs, theta_star, feature_sup, 1.0, None)?)
}

/// Small random instance for gradient and property checks: `d <= 6`, up to 6
/// contexts with up to 5 actions each, random feature and parameter bounds,
/// random strictly positive reference policies.
pub fn gen_env_random<R: Rng + ?Sized>(rng: &mut R) -> Environment {
    let d = rng.random_range(1..=6usize);
    let n_contexts = rng.random_range(1..=6usize);
    let c: f64 = rng.random_range(0.5..2.0);
    let d_bound: f64 = rng.random_range(0.5..2.0);
    let mut specs = Vec::with_capacity(n_contexts);
    for _ in 0..n_contexts {
        let n_actions = rng.random_range(1..=5usize);
        let mut features = Vec::with_capacity(n_actions);
        for _ in 0..n_actions {
            let mut phi: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let norm = norm2(&phi);
            if norm > 1e-12 {
                let target: f64 = rng.random_range(0.0..c);
                for v in &mut phi {
                    *v *= target / norm;
                }
            }
            features.push(phi);
        }
        let raw: Vec<f64> = (0..n_actions).map(|_| rng.random_range(0.1..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        let ref_probs = raw.iter().map(|x| x / sum).collect();
        specs.push(ContextSpec {
            features,
            ref_probs,
        });
    }
    let mut theta_star = unit_ball_sample(d, rng);
    for v in &mut theta_star {
        *v *= d_bound;
    }
    Environment::new(specs, theta_star, c, d_bound, None).expect("random instance is valid")
}

/// Stream seed for a sweep task, `mix64(master, point_index * replicates + replicate)`.
pub(crate) fn task_seed(master: u64, point_index: usize, replicates: usize, replicate: usize) -> u64 {
    mix64(master, (point_index * replicates + replicate) as u64)
}
