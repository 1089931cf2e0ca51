//! Self-check suite behind the CLI `check` command: one deterministic
//! pass/fail line per property, spanning the policy algebra, the gradient
//! oracles, the optimizer bounds, and the column-space lemmas.

use crate::coverage::{
    column_space_invariance_gap, column_space_projector, cp_matrix_properties,
    residual_decomposition,
};
use crate::experiments::{
    exact_coverage_probability, gen_env_orthonormal, gen_env_random, mc_coverage_probability,
};
use crate::gradients::{
    default_fd_step, empirical_covariance, finite_difference_gradient, gradient_closed_form,
    gradient_score_function, smoothness_constant, stochastic_gradient,
};
use crate::linalg::{norm2, sub};
use crate::model::{
    empirical_objective, kl_to_ref, per_prompt_objective, policy_probs, Dataset, ParamVector,
};
use crate::optim::{find_stationary_with, run_ga, StationaryOptions};
use crate::rng::{mix64, stream_rng};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Deliberate defects injectable for harness self-tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Negates the score-function gradient before the cross-oracle check.
    ScoreSignFlip,
}

#[derive(Debug, Clone)]
pub struct CheckOptions {
    pub seed: u64,
    pub fault: Option<Fault>,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            seed: 0,
            fault: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn rng_for(opts: &CheckOptions, tag: u64) -> ChaCha8Rng {
    stream_rng(mix64(opts.seed, tag), 0)
}

fn theta_in_ball<R: Rng + ?Sized>(dim: usize, radius: f64, rng: &mut R) -> Vec<f64> {
    let mut t: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = norm2(&t);
    if norm > 0.0 {
        let target = rng.random_range(0.0..radius);
        for v in &mut t {
            *v *= target / norm;
        }
    }
    t
}

/// Runs the whole suite; results come back in a fixed order.
pub fn run_checks(opts: &CheckOptions) -> Vec<CheckResult> {
    let mut out = Vec::new();
    out.push(check_normalization(opts));
    out.push(check_kl_nonnegative(opts));
    out.push(check_bounded_loss(opts));
    out.push(check_pointwise_optimality(opts));
    out.push(check_gradient_oracles(opts));
    out.push(check_gradient_fd(opts));
    out.push(check_unbiasedness(opts));
    out.push(check_covariance_norm(opts));
    out.push(check_smoothness(opts));
    out.push(check_neighbor_gap(opts));
    out.push(check_ga_bounds(opts));
    out.push(check_column_space_invariance(opts));
    out.push(check_cp_rank(opts));
    out.push(check_projector_and_containment(opts));
    out.push(check_coverage_oracles(opts));
    out.push(check_stationary_value_agreement(opts));
    out
}

fn check_normalization(opts: &CheckOptions) -> CheckResult {
    let mut rng = rng_for(opts, 1);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let env = gen_env_random(&mut rng);
        let theta = theta_in_ball(env.dim(), env.radius(), &mut rng);
        for x in 0..env.n_contexts() {
            let p = policy_probs(&env, &theta, x).unwrap();
            let sum: f64 = p.iter().sum();
            worst = worst.max((sum - 1.0).abs());
            if p.iter().any(|&v| !(v > 0.0)) {
                return CheckResult {
                    name: "policy normalization",
                    pass: false,
                    detail: "nonpositive probability".into(),
                };
            }
        }
    }
    CheckResult {
        name: "policy normalization",
        pass: worst <= 1e-12,
        detail: format!("max |sum-1| = {worst:.2e}"),
    }
}

fn check_kl_nonnegative(opts: &CheckOptions) -> CheckResult {
    let mut rng = rng_for(opts, 2);
    let mut min_kl = f64::INFINITY;
    let mut zero_ok = true;
    for _ in 0..50 {
        let env = gen_env_random(&mut rng);
        let theta = theta_in_ball(env.dim(), env.radius(), &mut rng);
        let zero = vec![0.0; env.dim()];
        for x in 0..env.n_contexts() {
            min_kl = min_kl.min(kl_to_ref(&env, &theta, x).unwrap());
            zero_ok &= kl_to_ref(&env, &zero, x).unwrap().abs() <= 1e-12;
        }
    }
    CheckResult {
        name: "KL nonnegative, zero at reference",
        pass: min_kl >= -1e-12 && zero_ok,
        detail: format!("min KL = {min_kl:.2e}"),
    }
}

fn check_bounded_loss(opts: &CheckOptions) -> CheckResult {
    let mut rng = rng_for(opts, 3);
    let mut worst_ratio = 0.0f64;
    for _ in 0..50 {
        let env = gen_env_random(&mut rng);
        let bound = 3.0 * env.radius() * env.feature_bound();
        let theta = theta_in_ball(env.dim(), env.radius(), &mut rng);
        for x in 0..env.n_contexts() {
            let f = per_prompt_objective(&env, &theta, x).unwrap();
            worst_ratio = worst_ratio.max(f.abs() / (bound + 1e-9));
        }
    }
    CheckResult {
        name: "bounded per-prompt objective (3RC)",
        pass: worst_ratio <= 1.0,
        detail: format!("max |f|/3RC = {worst_ratio:.3}"),
    }
}

fn check_pointwise_optimality(opts: &CheckOptions) -> CheckResult {
    let mut rng = rng_for(opts, 4);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..50 {
        let env = gen_env_random(&mut rng);
        let theta = theta_in_ball(env.dim(), env.radius(), &mut rng);
        for x in 0..env.n_contexts() {
            let f_star = per_prompt_objective(&env, env.theta_star(), x).unwrap();
            let f = per_prompt_objective(&env, &theta, x).unwrap();
            worst = worst.max(f - f_star);
        }
    }
    CheckResult {
        name: "ground truth pointwise optimal",
        pass: worst <= 1e-12,
        detail: format!("max f(theta) - f(theta*) = {worst:.2e}"),
    }
}

fn check_gradient_oracles(opts: &CheckOptions) -> CheckResult {
    let mut rng = rng_for(opts, 5);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let env = gen_env_random(&mut rng);
        let n = rng.random_range(1..=8);
        let s = Dataset::sample_iid(&env, n, &mut rng);
        let theta = theta_in_ball(env.dim(), env.radius(), &mut rng);
        let a = gradient_closed_form(&env, &theta, &s);
        let mut b = gradient_score_function(&env, &theta, &s);
        if opts.fault == Some(Fault::ScoreSignFlip) {
            for v in &mut b {
                *v = -*v;
            }
        }
        let rel = norm2(&sub(&a, &b)) / norm2(&a).max(1e-12);
        worst = worst.max(rel);
    }
    CheckResult {
        name: "closed-form vs score-function gradient",
        pass: worst <= 1e-10,
        detail: format!("max rel diff = {worst:.2e}"),
    }
}

fn check_gradient_fd(opts: &CheckOptions) -> CheckResult {
    let mut rng = rng_for(opts, 6);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let env = gen_env_random(&mut rng);
        let n = rng.random_range(1..=8);
        let s = Dataset::sample_iid(&env, n, &mut rng);
        let theta = theta_in_ball(env.dim(), env.radius(), &mut rng);
        let a = gradient_closed_form(&env, &theta, &s);
        let fd = finite_difference_gradient(&env, &theta, &s, default_fd_step(&theta));
        let rel = norm2(&sub(&a, &fd)) / norm2(&a).max(norm2(&fd)).max(1e-6);
        worst = worst.max(rel);
    }
    CheckResult {
        name: "gradient vs central finite differences",
        pass: worst <= 1e-5,
        detail: format!("max rel diff = {worst:.2e}"),
    }
}

fn check_unbiasedness(opts: &CheckOptions) -> CheckResult {
    let mut rng = rng_for(opts, 7);
    let mut exact = true;
    for _ in 0..50 {
        let env = gen_env_random(&mut rng);
        let n = rng.random_range(1..=8);
        let s = Dataset::sample_iid(&env, n, &mut rng);
        let theta = theta_in_ball(env.dim(), env.radius(), &mut rng);
        let mut acc = vec![0.0; env.dim()];
        for &x in s.indices() {
            let g = stochastic_gradient(&env, &theta, x).unwrap();
            for (a, b) in acc.iter_mut().zip(g.iter()) {
                *a += b;
            }
        }
        for v in &mut acc {
            *v *= 1.0 / s.len() as f64;
        }
        exact &= acc == gradient_closed_form(&env, &theta, &s);
    }
    CheckResult {
        name: "stochastic gradient mean unbiased (exact)",
        pass: exact,
        detail: if exact { "bitwise equal".into() } else { "mismatch".into() },
    }
}

fn check_covariance_norm(opts: &CheckOptions) -> CheckResult {
    let mut rng = rng_for(opts, 8);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let env = gen_env_random(&mut rng);
        let theta = theta_in_ball(env.dim(), env.radius(), &mut rng);
        let n = rng.random_range(1..=6);
        let s = Dataset::sample_iid(&env, n, &mut rng);
        let v = empirical_covariance(&env, &theta, &s);
        let c2 = env.feature_bound() * env.feature_bound();
        worst = worst.max(v.sigma_max() - c2);
    }
    CheckResult {
        name: "covariance spectral norm <= C^2",
        pass: worst <= 1e-10,
        detail: format!("max excess = {worst:.2e}"),
    }
}

fn check_smoothness(opts: &CheckOptions) -> CheckResult {
    let mut rng = rng_for(opts, 9);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..50 {
        let env = gen_env_random(&mut rng);
        let n = rng.random_range(1..=6);
        let s = Dataset::sample_iid(&env, n, &mut rng);
        let lf = smoothness_constant(env.radius(), env.feature_bound());
        let t1 = theta_in_ball(env.dim(), env.radius(), &mut rng);
        let t2 = theta_in_ball(env.dim(), env.radius(), &mut rng);
        let g1 = gradient_closed_form(&env, &t1, &s);
        let g2 = gradient_closed_form(&env, &t2, &s);
        let lhs = norm2(&sub(&g1, &g2));
        let rhs = lf * norm2(&sub(&t1, &t2)) + 1e-9;
        worst = worst.max(lhs - rhs);
    }
    CheckResult {
        name: "gradient Lipschitz with L_f = 8RC^3 + C^2",
        pass: worst <= 0.0,
        detail: format!("max violation = {worst:.2e}"),
    }
}

fn check_neighbor_gap(opts: &CheckOptions) -> CheckResult {
    let mut rng = rng_for(opts, 10);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..50 {
        let env = gen_env_random(&mut rng);
        let n = rng.random_range(2..=8);
        let s = Dataset::sample_iid(&env, n, &mut rng);
        let s_prime = s.replace(
            rng.random_range(0..n),
            rng.random_range(0..env.n_contexts()),
        );
        let theta = theta_in_ball(env.dim(), env.radius(), &mut rng);
        let gap = norm2(&sub(
            &gradient_closed_form(&env, &theta, &s),
            &gradient_closed_form(&env, &theta, &s_prime),
        ));
        let bound = 4.0 * env.radius() * env.feature_bound().powi(2) / n as f64 + 1e-12;
        worst = worst.max(gap - bound);
    }
    CheckResult {
        name: "neighbor-dataset gradient gap <= 4RC^2/n",
        pass: worst <= 0.0,
        detail: format!("max violation = {worst:.2e}"),
    }
}

fn check_ga_bounds(opts: &CheckOptions) -> CheckResult {
    let mut rng = rng_for(opts, 11);
    let mut worst_bound = f64::NEG_INFINITY;
    let mut worst_ball = f64::NEG_INFINITY;
    for _ in 0..10 {
        let env = gen_env_random(&mut rng);
        let n = rng.random_range(1..=6);
        let s = Dataset::sample_iid(&env, n, &mut rng);
        let t = rng.random_range(50..=400u64);
        let init = ParamVector::zeros(env.dim(), env.param_bound());
        let trace = run_ga(&env, &s, &init, t).unwrap();
        let lf = smoothness_constant(env.radius(), env.feature_bound());
        let bound = 12.0 * lf * env.radius() * env.feature_bound() / t as f64 + 1e-9;
        let min_sq = trace.selected_grad_norm().powi(2);
        worst_bound = worst_bound.max(min_sq - bound);
        for it in &trace.iterates {
            worst_ball = worst_ball.max(it.norm() - env.radius() - 1e-10);
        }
    }
    CheckResult {
        name: "GA gradient-norm bound and 3D ball",
        pass: worst_bound <= 0.0 && worst_ball <= 0.0,
        detail: format!("bound slack = {worst_bound:.2e}, ball slack = {worst_ball:.2e}"),
    }
}

fn check_column_space_invariance(opts: &CheckOptions) -> CheckResult {
    let mut rng = rng_for(opts, 12);
    let mut worst = 0.0f64;
    for trial in 0..10 {
        let env = gen_env_orthonormal(8, 0.05, mix64(opts.seed, 1200 + trial)).unwrap();
        let s = Dataset::sample_iid(&env, 20, &mut rng);
        let t1 = theta_in_ball(8, 1.0, &mut rng);
        let t2 = theta_in_ball(8, 1.0, &mut rng);
        worst = worst.max(column_space_invariance_gap(&env, &s, &t1, &t2));
    }
    CheckResult {
        name: "column space invariant over theta",
        pass: worst <= 1e-8,
        detail: format!("max projector gap = {worst:.2e}"),
    }
}

fn check_cp_rank(opts: &CheckOptions) -> CheckResult {
    let mut rng = rng_for(opts, 13);
    let mut all = true;
    for _ in 0..50 {
        let k = rng.random_range(1..=8usize);
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|v| v / sum).collect();
        let rep = cp_matrix_properties(&p).unwrap();
        all &= rep.rank == k - 1 && rep.ones_residual <= 1e-10 * k as f64;
    }
    CheckResult {
        name: "C_p rank n-1 with all-ones null space",
        pass: all,
        detail: "50 random simplex points".into(),
    }
}

fn check_projector_and_containment(opts: &CheckOptions) -> CheckResult {
    let mut rng = rng_for(opts, 14);
    let mut ok = true;
    let mut worst = 0.0f64;
    for _ in 0..30 {
        let env = gen_env_random(&mut rng);
        let n = rng.random_range(1..=6);
        let s = Dataset::sample_iid(&env, n, &mut rng);
        let theta = theta_in_ball(env.dim(), env.radius(), &mut rng);
        let v = empirical_covariance(&env, &theta, &s);
        let p = column_space_projector(&v);
        ok &= p.asymmetry() <= 1e-10;
        // containment of the gradient
        let g = gradient_closed_form(&env, &theta, &s);
        let pg = p.matvec(&g);
        let resid = norm2(&sub(&g, &pg));
        worst = worst.max(resid / norm2(&g).max(1.0));
        // residual decomposition orthogonality on a random feature
        let x = rng.random_range(0..env.n_contexts());
        let ctx_features = env.context(x).unwrap();
        let phi = ctx_features.feature(0);
        let dec = residual_decomposition(phi, &v);
        let pr = p.matvec(&dec.r);
        ok &= norm2(&pr) <= 1e-9 * norm2(phi).max(1.0);
    }
    CheckResult {
        name: "projector algebra and gradient containment",
        pass: ok && worst <= 1e-10,
        detail: format!("max containment residual = {worst:.2e}"),
    }
}

fn check_coverage_oracles(opts: &CheckOptions) -> CheckResult {
    let mut worst_z = 0.0f64;
    for (d, p, n) in [(4usize, 0.1, 10usize), (6, 0.05, 25), (8, 0.1, 30)] {
        let exact = exact_coverage_probability(d, p, n).unwrap();
        let (mc, _) =
            mc_coverage_probability(d, p, n, 10_000, mix64(opts.seed, 1500 + d as u64)).unwrap();
        let se = (exact * (1.0 - exact) / 10_000.0).sqrt();
        worst_z = worst_z.max((mc - exact).abs() / se.max(1e-12));
    }
    CheckResult {
        name: "coverage Monte Carlo vs inclusion-exclusion",
        pass: worst_z <= 3.0,
        detail: format!("max |z| = {worst_z:.2}"),
    }
}

fn check_stationary_value_agreement(opts: &CheckOptions) -> CheckResult {
    let mut rng = rng_for(opts, 16);
    let env =
        crate::experiments::gen_env_rank_deficient(10, 6, 40, mix64(opts.seed, 1600)).unwrap();
    let s = Dataset::from_range(0, 5, &env).unwrap();
    let mut values = Vec::new();
    for _ in 0..5 {
        let anchor = theta_in_ball(10, env.param_bound(), &mut rng);
        let res = find_stationary_with(
            &env,
            &s,
            StationaryOptions {
                anchor: Some(anchor),
                ..StationaryOptions::default()
            },
        )
        .unwrap();
        if !res.converged {
            return CheckResult {
                name: "stationary points share the empirical objective",
                pass: false,
                detail: format!("proxy stalled at grad norm {:.2e}", res.grad_norm),
            };
        }
        values.push(empirical_objective(&env, res.theta.as_slice(), &s));
    }
    let spread = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - values.iter().cloned().fold(f64::INFINITY, f64::min);
    CheckResult {
        name: "stationary points share the empirical objective",
        pass: spread <= 1e-8,
        detail: format!("J_S spread = {spread:.2e}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass_by_default() {
        let results = run_checks(&CheckOptions::default());
        assert!(results.len() >= 10);
        for r in &results {
            assert!(r.pass, "check `{}` failed: {}", r.name, r.detail);
        }
    }

    #[test]
    fn fault_injection_trips_the_oracle_check() {
        let results = run_checks(&CheckOptions {
            seed: 0,
            fault: Some(Fault::ScoreSignFlip),
        });
        let graded = results
            .iter()
            .find(|r| r.name == "closed-form vs score-function gradient")
            .unwrap();
        assert!(!graded.pass);
    }

    #[test]
    fn checks_are_deterministic() {
        let a = run_checks(&CheckOptions { seed: 7, fault: None });
        let b = run_checks(&CheckOptions { seed: 7, fault: None });
        let fmt = |rs: &[CheckResult]| {
            rs.iter()
                .map(|r| format!("{}|{}|{}", r.name, r.pass, r.detail))
                .collect::<Vec<_>>()
                .join("\n")
        };
        assert_eq!(fmt(&a), fmt(&b));
    }
}
