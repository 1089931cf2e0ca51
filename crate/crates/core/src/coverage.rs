//! Spectral and column-space diagnostics of empirical covariances:
//! positive-definiteness, projectors, the feature-residual decomposition, and
//! the condition-ratio constants reported by the sweeps.

use crate::gradients::{empirical_covariance, CovarianceStat};
use crate::linalg::{axpy, dot, norm2, sym_eigen, SymMat};
use crate::model::{Dataset, Environment};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoverageError {
    #[error("probability vector must be strictly positive and sum to one (got sum {sum})")]
    NotASimplex { sum: f64 },
    #[error("condition-ratio input must contain at least one pair")]
    EmptyPairList,
}

/// Split of a feature vector against a covariance matrix:
/// `phi = V b + r` with `r` orthogonal to the column space of `V`.
#[derive(Debug, Clone)]
pub struct CoverageDecomposition {
    /// Coefficient vector, `b = V^+ phi` at the rank threshold.
    pub b: Vec<f64>,
    /// Residual `(I - P) phi`.
    pub r: Vec<f64>,
    pub residual_norm: f64,
    /// Rank of `V` at its threshold.
    pub basis_rank: usize,
}

/// `(sigma_min > sigma_floor, sigma_min)` for the smallest eigenvalue of `V`.
pub fn positive_definite_check(v: &CovarianceStat, sigma_floor: f64) -> (bool, f64) {
    let sigma_min = v.sigma_min();
    (sigma_min > sigma_floor, sigma_min)
}

/// Orthogonal projector onto the column space of `V` (eigenvalues above the
/// rank threshold).
pub fn column_space_projector(v: &CovarianceStat) -> SymMat {
    let mut p = SymMat::zeros(v.dim());
    for j in 0..v.dim() {
        if v.eigvals()[j] > v.rank_threshold() {
            p.add_scaled_outer(1.0, v.eigvec(j));
        }
    }
    p
}

/// Frobenius distance between the column-space projectors of `V_S(theta_1)`
/// and `V_S(theta_2)`. Near zero whenever the per-context features are
/// linearly independent (and `d >= |A|`), since the column space is then
/// invariant over `theta`.
pub fn column_space_invariance_gap(
    env: &Environment,
    s: &Dataset,
    theta_1: &[f64],
    theta_2: &[f64],
) -> f64 {
    let v1 = empirical_covariance(env, theta_1, s);
    let v2 = empirical_covariance(env, theta_2, s);
    let p1 = column_space_projector(&v1);
    let p2 = column_space_projector(&v2);
    p1.frobenius_distance(&p2)
}

/// Decomposes `phi` into `V b + r` via the thresholded pseudoinverse:
/// `b = V^+ phi`, `r = (I - P) phi`.
pub fn residual_decomposition(phi: &[f64], v: &CovarianceStat) -> CoverageDecomposition {
    let d = v.dim();
    assert_eq!(phi.len(), d, "feature dimension mismatch");
    let mut b = vec![0.0; d];
    let mut projected = vec![0.0; d];
    let mut basis_rank = 0;
    for j in 0..d {
        let sigma = v.eigvals()[j];
        if sigma > v.rank_threshold() {
            basis_rank += 1;
            let q = v.eigvec(j);
            let coeff = dot(q, phi);
            axpy(coeff / sigma, q, &mut b);
            axpy(coeff, q, &mut projected);
        }
    }
    let mut r = phi.to_vec();
    for (ri, pi) in r.iter_mut().zip(projected.iter()) {
        *ri -= pi;
    }
    let residual_norm = norm2(&r);
    CoverageDecomposition {
        b,
        r,
        residual_norm,
        basis_rank,
    }
}

/// Largest feature residual norm over all `(x, a)` in the probe set, against
/// `V_S(theta_ref)`. Duplicate probe entries are collapsed; the max is taken
/// in first-appearance order so the reduction is deterministic.
pub fn epsilon_n(
    env: &Environment,
    s: &Dataset,
    theta_ref: &[f64],
    probe_set: &Dataset,
) -> f64 {
    let v = empirical_covariance(env, theta_ref, s);
    let p = column_space_projector(&v);
    let d = env.dim();
    let mut proj = vec![0.0; d];
    let mut max_residual = 0.0f64;
    for (x, _) in probe_set.weighted_unique() {
        let ctx = env.context_unchecked(x);
        for a in 0..ctx.n_actions() {
            let phi = ctx.feature(a);
            p.matvec_into(phi, &mut proj);
            let mut sq = 0.0;
            for i in 0..d {
                let r = phi[i] - proj[i];
                sq += r * r;
            }
            max_residual = max_residual.max(sq.sqrt());
        }
    }
    max_residual
}

/// Condition ratio `sigma_max(A) / (sigma_min_pos(A) * sigma_min_pos(B))`.
///
/// `A` is the covariance at the stationary proxy, `B` the covariance at the
/// algorithm output. `None` when either matrix has no eigenvalue above its
/// rank threshold.
pub fn condition_ratio(v_stat: &CovarianceStat, v_out: &CovarianceStat) -> Option<f64> {
    let a = v_stat.sigma_min_pos()?;
    let b = v_out.sigma_min_pos()?;
    Some(v_stat.sigma_max() / (a * b))
}

/// Sampled condition-ratio maxima.
///
/// The underlying constants are suprema over all datasets; these are maxima
/// over the sampled pairs only, i.e. lower bounds, and are labeled as such
/// wherever they are reported.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaConstants {
    /// Max ratio over same-dataset pairs (stationary proxy vs own output).
    pub gamma_ss: f64,
    /// Max ratio over neighbor-dataset pairs, if any were supplied.
    pub gamma_ss_prime: Option<f64>,
}

/// Maxima of the condition ratios over sampled same-dataset pairs and
/// (optionally) neighbor-dataset pairs.
pub fn gamma_constants(
    same_pairs: &[(CovarianceStat, CovarianceStat)],
    neighbor_pairs: &[(CovarianceStat, CovarianceStat)],
) -> Result<GammaConstants, CoverageError> {
    if same_pairs.is_empty() {
        return Err(CoverageError::EmptyPairList);
    }
    let fold = |pairs: &[(CovarianceStat, CovarianceStat)]| -> f64 {
        pairs
            .iter()
            .map(|(a, b)| condition_ratio(a, b).unwrap_or(f64::INFINITY))
            .fold(0.0f64, f64::max)
    };
    Ok(GammaConstants {
        gamma_ss: fold(same_pairs),
        gamma_ss_prime: if neighbor_pairs.is_empty() {
            None
        } else {
            Some(fold(neighbor_pairs))
        },
    })
}

/// Rank and null-space structure of `C_p = diag(p) - p p^T`.
#[derive(Debug, Clone)]
pub struct CpMatrixReport {
    pub rank: usize,
    /// `|| C_p 1 ||`, which must vanish: the all-ones vector spans the null
    /// space.
    pub ones_residual: f64,
    /// Whether `rank == len(p) - 1` and the all-ones vector is annihilated.
    pub nullspace_check: bool,
}

/// Builds `C_p = diag(p) - p p^T` for a strictly positive probability vector
/// and verifies its rank is `|p| - 1` with the all-ones vector in the null
/// space.
pub fn cp_matrix_properties(p: &[f64]) -> Result<CpMatrixReport, CoverageError> {
    let sum: f64 = p.iter().sum();
    if p.is_empty() || (sum - 1.0).abs() > 1e-9 || p.iter().any(|&x| !(x > 0.0)) {
        return Err(CoverageError::NotASimplex { sum });
    }
    let n = p.len();
    let mut cp = SymMat::zeros(n);
    for i in 0..n {
        cp.set(i, i, p[i]);
    }
    cp.add_scaled_outer(-1.0, p);
    let stat = CovarianceStat::from_matrix(cp.clone());
    let ones = vec![1.0; n];
    let ones_residual = norm2(&cp.matvec(&ones));
    let rank = stat.rank();
    Ok(CpMatrixReport {
        rank,
        ones_residual,
        nullspace_check: rank == n - 1 && ones_residual <= 1e-10 * n as f64,
    })
}

/// Dimension of `C(A) + C(B)` computed independently of matrix addition:
/// rank of the stacked orthonormal bases `[Q_A | Q_B]`, via the
/// eigenvalues of the Gram matrix.
pub fn span_union_dim(va: &CovarianceStat, vb: &CovarianceStat) -> usize {
    let d = va.dim();
    assert_eq!(d, vb.dim());
    let mut basis: Vec<&[f64]> = Vec::new();
    for j in 0..d {
        if va.eigvals()[j] > va.rank_threshold() {
            basis.push(va.eigvec(j));
        }
    }
    for j in 0..d {
        if vb.eigvals()[j] > vb.rank_threshold() {
            basis.push(vb.eigvec(j));
        }
    }
    if basis.is_empty() {
        return 0;
    }
    let k = basis.len();
    let mut gram = SymMat::zeros(k);
    for i in 0..k {
        for j in 0..k {
            gram.set(i, j, dot(basis[i], basis[j]));
        }
    }
    let eig = sym_eigen(&gram);
    let tau = 1e-9 * eig.values[0].max(1.0);
    eig.values.iter().filter(|&&s| s > tau).count()
}
