//! Exact, stochastic, and finite-difference gradient oracles plus the
//! covariance statistics they are built from.
//!
//! The empirical objective has gradient `V_S(theta) (theta_star - theta)`
//! where `V_S` is the mean per-context feature covariance under the current
//! policy. Three independent evaluation routes are kept deliberately
//! separate so they can cross-validate each other:
//!
//! 1. [`gradient_closed_form`] accumulates `V_x(theta) (theta_star - theta)`
//!    per context (shared kernel with [`stochastic_gradient`]),
//! 2. [`gradient_score_function`] evaluates the score-function form
//!    `E[(phi - mu) (r - <theta, phi>)]` with its own accumulation,
//! 3. [`finite_difference_gradient`] central-differences the objective.

use crate::linalg::{axpy, dot, norm2, sym_eigen, SymMat};
use crate::model::{
    empirical_objective, policy_probs_ctx, Context, Dataset, Environment, EvalScratch, ModelError,
};

/// Symmetric PSD covariance matrix with cached eigendecomposition and the
/// numerical rank threshold `tau = 1e-9 * max(sigma_1, 1)`.
#[derive(Debug, Clone)]
pub struct CovarianceStat {
    matrix: SymMat,
    eigvals: Vec<f64>,
    /// column-major: eigenvector j is `eigvecs[j*d..(j+1)*d]`
    eigvecs: Vec<f64>,
    rank_threshold: f64,
}

impl CovarianceStat {
    /// Wraps a symmetric matrix, taking its eigendecomposition.
    pub fn from_matrix(mut matrix: SymMat) -> Self {
        matrix.symmetrize();
        let eig = sym_eigen(&matrix);
        let sigma_1 = eig.values.first().copied().unwrap_or(0.0);
        let rank_threshold = 1e-9 * sigma_1.max(1.0);
        CovarianceStat {
            matrix,
            eigvals: eig.values,
            eigvecs: eig.vectors,
            rank_threshold,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &SymMat {
        &self.matrix
    }

    /// Eigenvalues in nonincreasing order.
    pub fn eigvals(&self) -> &[f64] {
        &self.eigvals
    }

    pub fn eigvec(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.eigvecs[j * d..(j + 1) * d]
    }

    pub fn rank_threshold(&self) -> f64 {
        self.rank_threshold
    }

    /// Largest eigenvalue.
    pub fn sigma_max(&self) -> f64 {
        self.eigvals[0]
    }

    /// Smallest eigenvalue (may be a small negative rounding residue).
    pub fn sigma_min(&self) -> f64 {
        *self.eigvals.last().unwrap()
    }

    /// Smallest eigenvalue above the rank threshold, if any.
    pub fn sigma_min_pos(&self) -> Option<f64> {
        self.eigvals
            .iter()
            .copied()
            .filter(|&s| s > self.rank_threshold)
            .last()
    }

    /// Number of eigenvalues above the rank threshold.
    pub fn rank(&self) -> usize {
        self.eigvals
            .iter()
            .filter(|&&s| s > self.rank_threshold)
            .count()
    }
}

/// Scratch buffers for the per-context gradient kernel.
#[derive(Debug, Default, Clone)]
pub(crate) struct GradScratch {
    eval: EvalScratch,
    mu: Vec<f64>,
}

/// Accumulates `V_x(theta) (theta_star - theta)` into `out`.
///
/// Uses the cached rewards: `<phi_a, theta_star - theta> = r_a - t_a` where
/// `t_a` is the policy logit contribution, so no extra inner products against
/// `theta_star` are needed.
pub(crate) fn context_gradient_accum(
    ctx: &Context,
    theta: &[f64],
    out: &mut [f64],
    scratch: &mut GradScratch,
) {
    policy_probs_ctx(ctx, theta, &mut scratch.eval);
    let a_n = ctx.n_actions();
    scratch.mu.resize(theta.len(), 0.0);
    scratch.mu.fill(0.0);
    let mut m = 0.0;
    for a in 0..a_n {
        let p = scratch.eval.probs[a];
        axpy(p, ctx.feature(a), &mut scratch.mu);
        let t = scratch.eval.logits[a] - ctx.ln_ref(a);
        m += p * (ctx.reward(a) - t);
    }
    // V_x delta = sum_a w_a phi_a - (sum_a w_a) mu, w_a = p_a (<phi_a, delta> - m)
    let mut s = 0.0;
    for a in 0..a_n {
        let p = scratch.eval.probs[a];
        let t = scratch.eval.logits[a] - ctx.ln_ref(a);
        let w = p * (ctx.reward(a) - t - m);
        s += w;
        axpy(w, ctx.feature(a), out);
    }
    axpy(-s, &scratch.mu, out);
}

/// `V_x(theta) (theta_star - theta)` for a single context.
pub fn stochastic_gradient(
    env: &Environment,
    theta: &[f64],
    x: usize,
) -> Result<Vec<f64>, ModelError> {
    let ctx = env.context(x)?;
    if theta.len() != env.dim() {
        return Err(ModelError::DimMismatch {
            got: theta.len(),
            want: env.dim(),
        });
    }
    let mut out = vec![0.0; env.dim()];
    let mut scratch = GradScratch::default();
    context_gradient_accum(ctx, theta, &mut out, &mut scratch);
    Ok(out)
}

/// Full empirical gradient `V_S(theta) (theta_star - theta)`, accumulated per
/// context in dataset order and divided by `n` at the end. Averaging
/// [`stochastic_gradient`] over the dataset in the same order reproduces this
/// value exactly.
pub fn gradient_closed_form(env: &Environment, theta: &[f64], s: &Dataset) -> Vec<f64> {
    debug_assert_eq!(theta.len(), env.dim());
    let mut out = vec![0.0; env.dim()];
    let mut tmp = vec![0.0; env.dim()];
    let mut scratch = GradScratch::default();
    for &x in s.indices() {
        // per-context gradient in a fresh buffer, then summed: this makes
        // the dataset-order average of `stochastic_gradient` reproduce the
        // result bit for bit
        tmp.fill(0.0);
        context_gradient_accum(env.context_unchecked(x), theta, &mut tmp, &mut scratch);
        for (o, t) in out.iter_mut().zip(tmp.iter()) {
            *o += t;
        }
    }
    let inv = 1.0 / s.len() as f64;
    for v in &mut out {
        *v *= inv;
    }
    out
}

/// Gradient over `(context, weight)` pairs; the optimizers group duplicate
/// dataset entries once and reuse the grouping every step.
pub(crate) fn gradient_weighted_into(
    env: &Environment,
    theta: &[f64],
    weighted: &[(usize, f64)],
    out: &mut [f64],
    scratch: &mut GradScratch,
    tmp: &mut Vec<f64>,
) {
    out.fill(0.0);
    tmp.resize(out.len(), 0.0);
    for &(x, w) in weighted {
        tmp.fill(0.0);
        context_gradient_accum(env.context_unchecked(x), theta, tmp, scratch);
        axpy(w, tmp, out);
    }
}

/// Score-function form of the empirical gradient:
/// `(1/n) sum_i E_{pi_theta}[ grad log pi_theta(a|x_i) (r(x_i,a) - <theta, phi>) ]`
/// with `grad log pi_theta = phi - mu`. Exact finite sums, no sampling; an
/// independent algebraic route that must agree with [`gradient_closed_form`].
pub fn gradient_score_function(env: &Environment, theta: &[f64], s: &Dataset) -> Vec<f64> {
    debug_assert_eq!(theta.len(), env.dim());
    let d = env.dim();
    let mut out = vec![0.0; d];
    let mut scratch = EvalScratch::default();
    let mut mu = vec![0.0; d];
    for &x in s.indices() {
        let ctx = env.context_unchecked(x);
        policy_probs_ctx(ctx, theta, &mut scratch);
        mu.fill(0.0);
        for a in 0..ctx.n_actions() {
            axpy(scratch.probs[a], ctx.feature(a), &mut mu);
        }
        // sum_a v_a phi_a - (sum_a v_a) mu, v_a = p_a (r_a - <theta, phi_a>)
        let mut total = 0.0;
        for a in 0..ctx.n_actions() {
            let advantage = ctx.reward(a) - dot(theta, ctx.feature(a));
            let v = scratch.probs[a] * advantage;
            total += v;
            axpy(v, ctx.feature(a), &mut out);
        }
        axpy(-total, &mu, &mut out);
    }
    let inv = 1.0 / s.len() as f64;
    for v in &mut out {
        *v *= inv;
    }
    out
}

/// Central finite differences of the empirical objective, coordinate by
/// coordinate.
pub fn finite_difference_gradient(
    env: &Environment,
    theta: &[f64],
    s: &Dataset,
    step: f64,
) -> Vec<f64> {
    assert!(step > 0.0, "finite-difference step must be positive");
    let mut probe = theta.to_vec();
    let mut out = vec![0.0; theta.len()];
    for i in 0..theta.len() {
        probe[i] = theta[i] + step;
        let plus = empirical_objective(env, &probe, s);
        probe[i] = theta[i] - step;
        let minus = empirical_objective(env, &probe, s);
        probe[i] = theta[i];
        out[i] = (plus - minus) / (2.0 * step);
    }
    out
}

/// Default finite-difference step `1e-6 * (1 + ||theta||)`.
pub fn default_fd_step(theta: &[f64]) -> f64 {
    1e-6 * (1.0 + norm2(theta))
}

/// Smoothness constant `L_f = 8 R C^3 + C^2` of the empirical objective on
/// the radius-`R` ball.
pub fn smoothness_constant(radius: f64, feature_bound: f64) -> f64 {
    8.0 * radius * feature_bound.powi(3) + feature_bound.powi(2)
}

/// Per-context policy covariance `V_x(theta) = E[phi phi^T] - mu mu^T`,
/// computed in centered form.
pub fn context_covariance(
    env: &Environment,
    theta: &[f64],
    x: usize,
) -> Result<CovarianceStat, ModelError> {
    let ctx = env.context(x)?;
    if theta.len() != env.dim() {
        return Err(ModelError::DimMismatch {
            got: theta.len(),
            want: env.dim(),
        });
    }
    Ok(CovarianceStat::from_matrix(context_cov_matrix(
        ctx,
        theta,
        env.dim(),
    )))
}

fn context_cov_matrix(ctx: &Context, theta: &[f64], dim: usize) -> SymMat {
    let mut scratch = EvalScratch::default();
    policy_probs_ctx(ctx, theta, &mut scratch);
    let mut mu = vec![0.0; dim];
    for a in 0..ctx.n_actions() {
        axpy(scratch.probs[a], ctx.feature(a), &mut mu);
    }
    let mut m = SymMat::zeros(dim);
    let mut centered = vec![0.0; dim];
    for a in 0..ctx.n_actions() {
        centered.copy_from_slice(ctx.feature(a));
        for (c, g) in centered.iter_mut().zip(mu.iter()) {
            *c -= g;
        }
        m.add_scaled_outer(scratch.probs[a], &centered);
    }
    m
}

/// Empirical covariance `V_S(theta)`: mean of the per-context covariances in
/// dataset order.
pub fn empirical_covariance(env: &Environment, theta: &[f64], s: &Dataset) -> CovarianceStat {
    debug_assert_eq!(theta.len(), env.dim());
    let mut acc = SymMat::zeros(env.dim());
    for &x in s.indices() {
        let m = context_cov_matrix(env.context_unchecked(x), theta, env.dim());
        acc.add_scaled(1.0, &m);
    }
    acc.scale(1.0 / s.len() as f64);
    CovarianceStat::from_matrix(acc)
}

/// Weighted-covariance variant used after grouping duplicate dataset entries.
pub(crate) fn covariance_weighted(
    env: &Environment,
    theta: &[f64],
    weighted: &[(usize, f64)],
) -> CovarianceStat {
    let mut acc = SymMat::zeros(env.dim());
    for &(x, w) in weighted {
        let m = context_cov_matrix(env.context_unchecked(x), theta, env.dim());
        acc.add_scaled(w, &m);
    }
    CovarianceStat::from_matrix(acc)
}
