//! Environments, policies, rewards, and objective evaluation.
//!
//! An [`Environment`] is a finite pool of contexts. Each context carries one
//! feature vector and one reference probability per action; rewards are
//! `<theta_star, phi(x,a)>`. The learned policy class reweights the reference
//! policy by `exp(<theta, phi(x,a)>)` and all action expectations are exact
//! finite sums — nothing here is sampled.

use crate::linalg::{dot, norm2};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("context index {index} out of range (environment has {len} contexts)")]
    InvalidContext { index: usize, len: usize },
    #[error("action index {index} out of range (context has {len} actions)")]
    InvalidAction { index: usize, len: usize },
    #[error("parameter has dimension {got}, environment has dimension {want}")]
    DimMismatch { got: usize, want: usize },
    #[error("dataset must contain at least one context index")]
    EmptyDataset,
    #[error("dataset index {index} out of range (environment has {len} contexts)")]
    DatasetIndexOutOfRange { index: usize, len: usize },
    #[error("parameter norm {norm} exceeds radius budget {budget}")]
    RadiusExceeded { norm: f64, budget: f64 },
    #[error("environment invariant violated: {0}")]
    InvalidEnvironment(String),
}

/// Slack applied to the construction-time invariant checks.
const INVARIANT_TOL: f64 = 1e-12;

/// Raw per-context data used to build an [`Environment`].
#[derive(Debug, Clone)]
pub struct ContextSpec {
    /// One feature vector per action.
    pub features: Vec<Vec<f64>>,
    /// Reference policy over the actions; strictly positive, sums to one.
    pub ref_probs: Vec<f64>,
}

/// A context with its per-action features, reference policy, and cached
/// rewards `<theta_star, phi(x,a)>`.
#[derive(Debug, Clone)]
pub struct Context {
    n_actions: usize,
    dim: usize,
    /// `n_actions x dim`, row-major.
    features: Vec<f64>,
    ref_probs: Vec<f64>,
    ln_ref: Vec<f64>,
    rewards: Vec<f64>,
}

impl Context {
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn feature(&self, a: usize) -> &[f64] {
        &self.features[a * self.dim..(a + 1) * self.dim]
    }

    pub fn ref_probs(&self) -> &[f64] {
        &self.ref_probs
    }

    #[inline]
    pub fn ln_ref(&self, a: usize) -> f64 {
        self.ln_ref[a]
    }

    #[inline]
    pub fn reward(&self, a: usize) -> f64 {
        self.rewards[a]
    }
}

/// Finite environment: contexts, ground-truth parameter, norm bounds, and the
/// sampling law over contexts.
#[derive(Debug, Clone)]
pub struct Environment {
    dim: usize,
    contexts: Vec<Context>,
    theta_star: Vec<f64>,
    feature_bound: f64,
    param_bound: f64,
    weights: Vec<f64>,
    cdf: Vec<f64>,
}

impl Environment {
    /// Builds and validates an environment.
    ///
    /// `weights` is the categorical sampling law over contexts; `None` means
    /// uniform. Checks the normalization, positivity, feature-norm, and
    /// parameter-norm invariants and refuses to construct a violating
    /// environment.
    pub fn new(
        specs: Vec<ContextSpec>,
        theta_star: Vec<f64>,
        feature_bound: f64,
        param_bound: f64,
        weights: Option<Vec<f64>>,
    ) -> Result<Self, ModelError> {
        if specs.is_empty() {
            return Err(ModelError::InvalidEnvironment(
                "environment needs at least one context".into(),
            ));
        }
        if !(feature_bound > 0.0) || !(param_bound > 0.0) {
            return Err(ModelError::InvalidEnvironment(
                "feature and parameter bounds must be positive".into(),
            ));
        }
        let dim = theta_star.len();
        if norm2(&theta_star) > param_bound + INVARIANT_TOL {
            return Err(ModelError::InvalidEnvironment(format!(
                "ground-truth norm {} exceeds bound {}",
                norm2(&theta_star),
                param_bound
            )));
        }
        let mut contexts = Vec::with_capacity(specs.len());
        for (xi, spec) in specs.into_iter().enumerate() {
            let n_actions = spec.features.len();
            if n_actions == 0 {
                return Err(ModelError::InvalidEnvironment(format!(
                    "context {xi} has no actions"
                )));
            }
            if spec.ref_probs.len() != n_actions {
                return Err(ModelError::InvalidEnvironment(format!(
                    "context {xi}: {} reference probabilities for {} actions",
                    spec.ref_probs.len(),
                    n_actions
                )));
            }
            let sum: f64 = spec.ref_probs.iter().sum();
            if (sum - 1.0).abs() > INVARIANT_TOL {
                return Err(ModelError::InvalidEnvironment(format!(
                    "context {xi}: reference policy sums to {sum}"
                )));
            }
            if spec.ref_probs.iter().any(|&p| !(p > 0.0)) {
                return Err(ModelError::InvalidEnvironment(format!(
                    "context {xi}: reference policy has a non-positive entry"
                )));
            }
            let mut features = Vec::with_capacity(n_actions * dim);
            let mut rewards = Vec::with_capacity(n_actions);
            for (ai, phi) in spec.features.iter().enumerate() {
                if phi.len() != dim {
                    return Err(ModelError::InvalidEnvironment(format!(
                        "context {xi} action {ai}: feature dimension {} != {}",
                        phi.len(),
                        dim
                    )));
                }
                if norm2(phi) > feature_bound + INVARIANT_TOL {
                    return Err(ModelError::InvalidEnvironment(format!(
                        "context {xi} action {ai}: feature norm {} exceeds bound {}",
                        norm2(phi),
                        feature_bound
                    )));
                }
                rewards.push(dot(&theta_star, phi));
                features.extend_from_slice(phi);
            }
            let ln_ref = spec.ref_probs.iter().map(|p| p.ln()).collect();
            contexts.push(Context {
                n_actions,
                dim,
                features,
                ref_probs: spec.ref_probs,
                ln_ref,
                rewards,
            });
        }
        let n = contexts.len();
        let weights = match weights {
            Some(w) => {
                if w.len() != n {
                    return Err(ModelError::InvalidEnvironment(format!(
                        "{} sampling weights for {} contexts",
                        w.len(),
                        n
                    )));
                }
                let s: f64 = w.iter().sum();
                if (s - 1.0).abs() > 1e-9 || w.iter().any(|&p| !(p >= 0.0)) {
                    return Err(ModelError::InvalidEnvironment(
                        "sampling weights must be nonnegative and sum to one".into(),
                    ));
                }
                w
            }
            None => vec![1.0 / n as f64; n],
        };
        let mut cdf = Vec::with_capacity(n);
        let mut acc = 0.0;
        for w in &weights {
            acc += w;
            cdf.push(acc);
        }
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        Ok(Environment {
            dim,
            contexts,
            theta_star,
            feature_bound,
            param_bound,
            weights,
            cdf,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_contexts(&self) -> usize {
        self.contexts.len()
    }

    pub fn context(&self, x: usize) -> Result<&Context, ModelError> {
        self.contexts.get(x).ok_or(ModelError::InvalidContext {
            index: x,
            len: self.contexts.len(),
        })
    }

    #[inline]
    pub(crate) fn context_unchecked(&self, x: usize) -> &Context {
        &self.contexts[x]
    }

    pub fn contexts(&self) -> &[Context] {
        &self.contexts
    }

    pub fn theta_star(&self) -> &[f64] {
        &self.theta_star
    }

    /// `C`, the feature-norm bound.
    pub fn feature_bound(&self) -> f64 {
        self.feature_bound
    }

    /// `D`, the ground-truth parameter bound.
    pub fn param_bound(&self) -> f64 {
        self.param_bound
    }

    /// `R = 3D`, the radius of the region all optimizer iterates stay in.
    pub fn radius(&self) -> f64 {
        3.0 * self.param_bound
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Draws one context index from the environment's sampling law.
    pub fn sample_context<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        match self
            .cdf
            .binary_search_by(|c| c.partial_cmp(&u).expect("cdf comparison"))
        {
            Ok(i) => (i + 1).min(self.contexts.len() - 1),
            Err(i) => i.min(self.contexts.len() - 1),
        }
    }

    /// Same features and reference policies, reward rescaled by `1/lambda`.
    ///
    /// A regularization weight `lambda != 1` is equivalent to dividing the
    /// reward by `lambda`, so the rescaling is expressed by transforming
    /// `theta_star` instead of threading `lambda` through every code path.
    pub fn with_rescaled_reward(&self, lambda: f64) -> Result<Environment, ModelError> {
        if !(lambda > 0.0) {
            return Err(ModelError::InvalidEnvironment(
                "lambda must be positive".into(),
            ));
        }
        let mut env = self.clone();
        for v in &mut env.theta_star {
            *v /= lambda;
        }
        env.param_bound = (self.param_bound / lambda).max(norm2(&env.theta_star));
        for ctx in &mut env.contexts {
            for r in &mut ctx.rewards {
                *r /= lambda;
            }
        }
        Ok(env)
    }

    fn check_dim(&self, theta: &[f64]) -> Result<(), ModelError> {
        if theta.len() != self.dim {
            return Err(ModelError::DimMismatch {
                got: theta.len(),
                want: self.dim,
            });
        }
        Ok(())
    }
}

/// A policy/reward parameter together with the norm budget it must satisfy.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    radius_budget: f64,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, radius_budget: f64) -> Result<Self, ModelError> {
        let norm = norm2(&values);
        if norm > radius_budget + 1e-12 {
            return Err(ModelError::RadiusExceeded {
                norm,
                budget: radius_budget,
            });
        }
        Ok(ParamVector {
            values,
            radius_budget,
        })
    }

    pub fn zeros(dim: usize, radius_budget: f64) -> Self {
        ParamVector {
            values: vec![0.0; dim],
            radius_budget,
        }
    }

    /// For optimizer iterates whose norm bound was already asserted with the
    /// optimizer's own (slightly wider) tolerance.
    pub(crate) fn new_trusted(values: Vec<f64>, radius_budget: f64) -> Self {
        ParamVector {
            values,
            radius_budget,
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn radius_budget(&self) -> f64 {
        self.radius_budget
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.values)
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// An ordered multiset of context indices (sampling with replacement is
/// expected, so duplicates are allowed).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    indices: Vec<usize>,
}

impl Dataset {
    pub fn new(indices: Vec<usize>, env: &Environment) -> Result<Self, ModelError> {
        if indices.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        for &i in &indices {
            if i >= env.n_contexts() {
                return Err(ModelError::DatasetIndexOutOfRange {
                    index: i,
                    len: env.n_contexts(),
                });
            }
        }
        Ok(Dataset { indices })
    }

    /// `n` i.i.d. draws from the environment's context law.
    pub fn sample_iid<R: Rng + ?Sized>(env: &Environment, n: usize, rng: &mut R) -> Self {
        assert!(n >= 1, "dataset needs at least one draw");
        let indices = (0..n).map(|_| env.sample_context(rng)).collect();
        Dataset { indices }
    }

    /// Consecutive pool slots `[start, start+n)`, used by the pool-partition
    /// experiment protocol.
    pub fn from_range(start: usize, n: usize, env: &Environment) -> Result<Self, ModelError> {
        Self::new((start..start + n).collect(), env)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Replaces the entry at `pos` with `index`, yielding a neighbor dataset.
    pub fn replace(&self, pos: usize, index: usize) -> Dataset {
        let mut indices = self.indices.clone();
        indices[pos] = index;
        Dataset { indices }
    }

    /// `(context index, multiplicity / n)` pairs in first-appearance order.
    ///
    /// Useful when the same context appears many times; objective and
    /// gradient sums over the dataset can then be grouped per unique context.
    pub fn weighted_unique(&self) -> Vec<(usize, f64)> {
        let mut order: Vec<usize> = Vec::new();
        let mut counts: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
        for &i in &self.indices {
            let e = counts.entry(i).or_insert(0);
            if *e == 0 {
                order.push(i);
            }
            *e += 1;
        }
        let n = self.indices.len() as f64;
        order
            .into_iter()
            .map(|i| (i, counts[&i] as f64 / n))
            .collect()
    }
}

/// Per-context scratch space so the hot evaluation paths never allocate.
#[derive(Debug, Default, Clone)]
pub(crate) struct EvalScratch {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

/// Policy probabilities for one context: softmax of
/// `ln pi_ref(a|x) + <theta, phi(x,a)>` with max subtraction.
pub(crate) fn policy_probs_ctx(ctx: &Context, theta: &[f64], scratch: &mut EvalScratch) {
    let a_n = ctx.n_actions;
    scratch.logits.resize(a_n, 0.0);
    scratch.probs.resize(a_n, 0.0);
    let mut max_logit = f64::NEG_INFINITY;
    for a in 0..a_n {
        let l = ctx.ln_ref(a) + dot(theta, ctx.feature(a));
        scratch.logits[a] = l;
        if l > max_logit {
            max_logit = l;
        }
    }
    let mut z = 0.0;
    for a in 0..a_n {
        let e = (scratch.logits[a] - max_logit).exp();
        scratch.probs[a] = e;
        z += e;
    }
    let inv = 1.0 / z;
    for p in &mut scratch.probs {
        *p *= inv;
    }
}

/// Per-prompt objective `f_theta(x)`: expected reward minus KL to the
/// reference, both as exact sums over actions.
pub(crate) fn context_objective(ctx: &Context, theta: &[f64], scratch: &mut EvalScratch) -> f64 {
    policy_probs_ctx(ctx, theta, scratch);
    // KL(pi_theta || pi_ref) = sum_a p_a <theta, phi_a> - log Z_theta(x)
    // where Z_theta(x) = sum_a pi_ref(a) exp(<theta, phi_a>).
    let mut expected_reward = 0.0;
    let mut expected_score = 0.0;
    let mut max_logit = f64::NEG_INFINITY;
    for &l in scratch.logits.iter() {
        if l > max_logit {
            max_logit = l;
        }
    }
    let mut z = 0.0;
    for a in 0..ctx.n_actions {
        let p = scratch.probs[a];
        expected_reward += p * ctx.reward(a);
        expected_score += p * (scratch.logits[a] - ctx.ln_ref(a));
        z += (scratch.logits[a] - max_logit).exp();
    }
    let lse = max_logit + z.ln();
    let kl = expected_score - lse;
    expected_reward - kl
}

pub(crate) fn context_kl(ctx: &Context, theta: &[f64], scratch: &mut EvalScratch) -> f64 {
    policy_probs_ctx(ctx, theta, scratch);
    let mut expected_score = 0.0;
    let mut max_logit = f64::NEG_INFINITY;
    for &l in scratch.logits.iter() {
        if l > max_logit {
            max_logit = l;
        }
    }
    let mut z = 0.0;
    for a in 0..ctx.n_actions {
        expected_score += scratch.probs[a] * (scratch.logits[a] - ctx.ln_ref(a));
        z += (scratch.logits[a] - max_logit).exp();
    }
    expected_score - (max_logit + z.ln())
}

/// `pi_theta(.|x)` as a probability vector over the context's actions.
pub fn policy_probs(env: &Environment, theta: &[f64], x: usize) -> Result<Vec<f64>, ModelError> {
    env.check_dim(theta)?;
    let ctx = env.context(x)?;
    let mut scratch = EvalScratch::default();
    policy_probs_ctx(ctx, theta, &mut scratch);
    Ok(scratch.probs)
}

/// Ground-truth reward `<theta_star, phi(x,a)>`.
pub fn reward(env: &Environment, x: usize, a: usize) -> Result<f64, ModelError> {
    let ctx = env.context(x)?;
    if a >= ctx.n_actions {
        return Err(ModelError::InvalidAction {
            index: a,
            len: ctx.n_actions,
        });
    }
    Ok(ctx.reward(a))
}

/// `KL(pi_theta(.|x) || pi_ref(.|x))`.
pub fn kl_to_ref(env: &Environment, theta: &[f64], x: usize) -> Result<f64, ModelError> {
    env.check_dim(theta)?;
    let ctx = env.context(x)?;
    let mut scratch = EvalScratch::default();
    Ok(context_kl(ctx, theta, &mut scratch))
}

/// Per-prompt objective `f_theta(x)`.
pub fn per_prompt_objective(env: &Environment, theta: &[f64], x: usize) -> Result<f64, ModelError> {
    env.check_dim(theta)?;
    let ctx = env.context(x)?;
    let mut scratch = EvalScratch::default();
    Ok(context_objective(ctx, theta, &mut scratch))
}

/// Empirical objective: mean of `f_theta` over the dataset, in dataset order.
pub fn empirical_objective(env: &Environment, theta: &[f64], s: &Dataset) -> f64 {
    debug_assert_eq!(theta.len(), env.dim);
    let mut scratch = EvalScratch::default();
    let mut sum = 0.0;
    for &x in s.indices() {
        sum += context_objective(env.context_unchecked(x), theta, &mut scratch);
    }
    sum / s.len() as f64
}

/// Monte Carlo estimate of the population objective on a fixed test set.
///
/// The test set is drawn once per experiment from the environment's context
/// law and reused for every evaluation, so differences of these values are
/// comparable across parameters.
pub fn population_objective(env: &Environment, theta: &[f64], test_set: &Dataset) -> f64 {
    empirical_objective(env, theta, test_set)
}

/// `|J(pi_theta_star) - J(pi_theta)|` estimated on the fixed test set.
///
/// Reported as an absolute value to match the plotted quantity.
pub fn suboptimality_gap(env: &Environment, theta: &[f64], test_set: &Dataset) -> f64 {
    let j_star = population_objective(env, env.theta_star(), test_set);
    let j_theta = population_objective(env, theta, test_set);
    (j_star - j_theta).abs()
}

/// The three absolute terms of the suboptimality decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuboptimalityDecomposition {
    /// `|J(theta_star) - J_S(theta_star_S)|`
    pub concentration: f64,
    /// `|J_S(theta_star_S) - J_S(theta_S)|`
    pub optimization: f64,
    /// `|J_S(theta_S) - J(theta_S)|`
    pub generalization: f64,
}

impl SuboptimalityDecomposition {
    pub fn total(&self) -> f64 {
        self.concentration + self.optimization + self.generalization
    }
}

/// Splits the gap of `theta_learned` into concentration, optimization, and
/// generalization terms, with population values estimated on `test_set` and
/// `theta_stat` standing in for the empirical stationary point.
pub fn decompose_suboptimality(
    env: &Environment,
    theta_learned: &[f64],
    theta_stat: &[f64],
    s: &Dataset,
    test_set: &Dataset,
) -> SuboptimalityDecomposition {
    let j_pop_star = population_objective(env, env.theta_star(), test_set);
    let j_s_stat = empirical_objective(env, theta_stat, s);
    let j_s_learned = empirical_objective(env, theta_learned, s);
    let j_pop_learned = population_objective(env, theta_learned, test_set);
    SuboptimalityDecomposition {
        concentration: (j_pop_star - j_s_stat).abs(),
        optimization: (j_s_stat - j_s_learned).abs(),
        generalization: (j_s_learned - j_pop_learned).abs(),
    }
}

/// Total variation distance between two probability vectors.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    0.5 * p
        .iter()
        .zip(q.iter())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// d=1 environment with two actions, features +1 and -1, uniform
    /// reference, ground truth theta_star = 1.
    pub(crate) fn two_action_line_env() -> Environment {
        Environment::new(
            vec![ContextSpec {
                features: vec![vec![1.0], vec![-1.0]],
                ref_probs: vec![0.5, 0.5],
            }],
            vec![1.0],
            1.0,
            1.0,
            None,
        )
        .unwrap()
    }

    #[test]
    fn zero_parameter_reduces_to_reference() {
        let env = two_action_line_env();
        let p = policy_probs(&env, &[0.0], 0).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15);
        assert!((p[1] - 0.5).abs() < 1e-15);

        let skewed = Environment::new(
            vec![ContextSpec {
                features: vec![vec![1.0], vec![-1.0]],
                ref_probs: vec![0.9, 0.1],
            }],
            vec![1.0],
            1.0,
            1.0,
            None,
        )
        .unwrap();
        let p = policy_probs(&skewed, &[0.0], 0).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-15);
        assert!((p[1] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn boltzmann_weights_match_direct_evaluation() {
        // Direct evaluation of the definition with theta = 1:
        // p = (e^1*0.5, e^-1*0.5) normalized = (e^2/(e^2+1), 1/(e^2+1)).
        let env = two_action_line_env();
        let p = policy_probs(&env, &[1.0], 0).unwrap();
        let e2 = std::f64::consts::E * std::f64::consts::E;
        assert!((p[0] - e2 / (e2 + 1.0)).abs() < 1e-15);
        assert!((p[1] - 1.0 / (e2 + 1.0)).abs() < 1e-15);
        assert!((p[0] - 0.8808).abs() < 1e-4);
    }

    #[test]
    fn reward_is_inner_product() {
        let env = Environment::new(
            vec![ContextSpec {
                features: vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.8, 0.6]],
                ref_probs: vec![0.25, 0.25, 0.5],
            }],
            vec![1.0, 0.0],
            1.0,
            1.0,
            None,
        )
        .unwrap();
        assert_eq!(reward(&env, 0, 0).unwrap(), 0.0);
        assert_eq!(reward(&env, 0, 1).unwrap(), 1.0);

        let env2 = Environment::new(
            vec![ContextSpec {
                features: vec![vec![0.8, 0.6]],
                ref_probs: vec![1.0],
            }],
            vec![0.6, 0.8],
            1.0,
            1.0,
            None,
        )
        .unwrap();
        // hand computation: 0.6*0.8 + 0.8*0.6 = 0.96
        assert!((reward(&env2, 0, 0).unwrap() - 0.96).abs() < 1e-15);
    }

    #[test]
    fn kl_zero_cases() {
        let env = two_action_line_env();
        assert!(kl_to_ref(&env, &[0.0], 0).unwrap().abs() < 1e-15);

        // identical features: the exponent cancels in the normalization
        let env2 = Environment::new(
            vec![ContextSpec {
                features: vec![vec![0.3, 0.4], vec![0.3, 0.4]],
                ref_probs: vec![0.7, 0.3],
            }],
            vec![0.0, 1.0],
            1.0,
            1.0,
            None,
        )
        .unwrap();
        assert!(kl_to_ref(&env2, &[2.0, -1.0], 0).unwrap().abs() < 1e-14);
    }

    #[test]
    fn kl_matches_direct_summation() {
        // Independent oracle: direct two-term sum of the KL definition.
        let env = two_action_line_env();
        let p = policy_probs(&env, &[1.0], 0).unwrap();
        let oracle = p[0] * (p[0] / 0.5).ln() + p[1] * (p[1] / 0.5).ln();
        let kl = kl_to_ref(&env, &[1.0], 0).unwrap();
        assert!((kl - oracle).abs() < 1e-14, "kl={kl} oracle={oracle}");
        assert!((kl - 0.328).abs() < 1e-3);
    }

    #[test]
    fn per_prompt_objective_combines_reward_and_kl() {
        // single action aligned with theta_star: reward 1, KL 0
        let env = Environment::new(
            vec![ContextSpec {
                features: vec![vec![1.0, 0.0]],
                ref_probs: vec![1.0],
            }],
            vec![1.0, 0.0],
            1.0,
            1.0,
            None,
        )
        .unwrap();
        let f = per_prompt_objective(&env, &[1.0, 0.0], 0).unwrap();
        assert!((f - 1.0).abs() < 1e-14);

        // theta = 0: expected reward under the reference, KL vanishes
        let env = two_action_line_env();
        let f0 = per_prompt_objective(&env, &[0.0], 0).unwrap();
        assert!((f0 - 0.0).abs() < 1e-15); // 0.5*1 + 0.5*(-1)

        // combine the derived policy and KL values at theta = theta_star = 1
        let p = policy_probs(&env, &[1.0], 0).unwrap();
        let kl = kl_to_ref(&env, &[1.0], 0).unwrap();
        let expect = p[0] * 1.0 + p[1] * (-1.0) - kl;
        let f1 = per_prompt_objective(&env, &[1.0], 0).unwrap();
        assert!((f1 - expect).abs() < 1e-14);
        assert!((f1 - 0.4337).abs() < 1e-4);
    }

    #[test]
    fn empirical_objective_is_dataset_mean() {
        let env = Environment::new(
            vec![
                ContextSpec {
                    features: vec![vec![1.0], vec![-1.0]],
                    ref_probs: vec![0.5, 0.5],
                },
                ContextSpec {
                    features: vec![vec![0.5], vec![-0.5]],
                    ref_probs: vec![0.5, 0.5],
                },
            ],
            vec![1.0],
            1.0,
            1.0,
            None,
        )
        .unwrap();
        let theta = [0.7];
        let f0 = per_prompt_objective(&env, &theta, 0).unwrap();
        let f1 = per_prompt_objective(&env, &theta, 1).unwrap();

        let singleton = Dataset::new(vec![0], &env).unwrap();
        assert_eq!(empirical_objective(&env, &theta, &singleton), f0);

        let repeated = Dataset::new(vec![1, 1, 1], &env).unwrap();
        assert!((empirical_objective(&env, &theta, &repeated) - f1).abs() < 1e-15);

        let both = Dataset::new(vec![0, 1], &env).unwrap();
        assert!((empirical_objective(&env, &theta, &both) - 0.5 * (f0 + f1)).abs() < 1e-15);
    }

    #[test]
    fn gap_of_ground_truth_is_zero() {
        let env = two_action_line_env();
        let test = Dataset::new(vec![0, 0, 0], &env).unwrap();
        assert!(suboptimality_gap(&env, &[1.0], &test) < 1e-12);
    }

    #[test]
    fn decomposition_trivial_terms() {
        let env = two_action_line_env();
        let s = Dataset::new(vec![0], &env).unwrap();
        let test = Dataset::new(vec![0, 0], &env).unwrap();
        let d = decompose_suboptimality(&env, &[0.4], &[0.4], &s, &test);
        assert_eq!(d.optimization, 0.0);
        // S = test set: generalization term is exactly zero
        let d2 = decompose_suboptimality(&env, &[0.4], &[1.0], &s, &s);
        assert_eq!(d2.generalization, 0.0);
        // triangle inequality against the gap
        let gap = suboptimality_gap(&env, &[0.4], &test);
        let d3 = decompose_suboptimality(&env, &[0.4], &[1.0], &s, &test);
        assert!(d3.total() >= gap - 1e-12);
    }

    #[test]
    fn dataset_validation() {
        let env = two_action_line_env();
        assert!(matches!(
            Dataset::new(vec![], &env),
            Err(ModelError::EmptyDataset)
        ));
        assert!(matches!(
            Dataset::new(vec![3], &env),
            Err(ModelError::DatasetIndexOutOfRange { .. })
        ));
    }

    #[test]
    fn environment_rejects_invariant_violations() {
        // reference policy not normalized
        assert!(Environment::new(
            vec![ContextSpec {
                features: vec![vec![1.0], vec![-1.0]],
                ref_probs: vec![0.6, 0.5],
            }],
            vec![1.0],
            1.0,
            1.0,
            None,
        )
        .is_err());
        // zero-mass action
        assert!(Environment::new(
            vec![ContextSpec {
                features: vec![vec![1.0], vec![-1.0]],
                ref_probs: vec![1.0, 0.0],
            }],
            vec![1.0],
            1.0,
            1.0,
            None,
        )
        .is_err());
        // feature norm above the bound
        assert!(Environment::new(
            vec![ContextSpec {
                features: vec![vec![2.0]],
                ref_probs: vec![1.0],
            }],
            vec![1.0],
            1.0,
            1.0,
            None,
        )
        .is_err());
        // ground truth outside the parameter ball
        assert!(Environment::new(
            vec![ContextSpec {
                features: vec![vec![1.0]],
                ref_probs: vec![1.0],
            }],
            vec![2.0],
            1.0,
            1.0,
            None,
        )
        .is_err());
    }

    #[test]
    fn invalid_context_index_signals() {
        let env = two_action_line_env();
        assert!(matches!(
            policy_probs(&env, &[0.0], 5),
            Err(ModelError::InvalidContext { .. })
        ));
    }

    #[test]
    fn weighted_unique_groups_duplicates() {
        let env = Environment::new(
            vec![
                ContextSpec {
                    features: vec![vec![1.0]],
                    ref_probs: vec![1.0],
                },
                ContextSpec {
                    features: vec![vec![-1.0]],
                    ref_probs: vec![1.0],
                },
            ],
            vec![1.0],
            1.0,
            1.0,
            None,
        )
        .unwrap();
        let s = Dataset::new(vec![1, 0, 1, 1], &env).unwrap();
        let w = s.weighted_unique();
        assert_eq!(w, vec![(1, 0.75), (0, 0.25)]);
    }

    #[test]
    fn rescaled_reward_ranks_parameters_identically() {
        // lambda-weighted objective E[r] - lambda*KL equals
        // lambda * (per-prompt objective of the environment with r/lambda),
        // so the rescaled environment ranks parameters exactly as the
        // lambda-weighted objective does.
        let env = Environment::new(
            vec![ContextSpec {
                features: vec![vec![0.9, 0.1], vec![-0.3, 0.6], vec![0.2, -0.7]],
                ref_probs: vec![0.2, 0.5, 0.3],
            }],
            vec![0.6, -0.5],
            1.0,
            1.0,
            None,
        )
        .unwrap();
        let lambda = 2.5;
        let scaled = env.with_rescaled_reward(lambda).unwrap();
        let mut scratch = EvalScratch::default();
        for theta in [[0.0, 0.0], [0.4, -0.2], [-0.9, 0.3], [1.2, 1.1]] {
            // oracle: general-lambda objective evaluated directly
            let ctx = env.context(0).unwrap();
            policy_probs_ctx(ctx, &theta, &mut scratch);
            let e_r: f64 = (0..3).map(|a| scratch.probs[a] * ctx.reward(a)).sum();
            let kl = kl_to_ref(&env, &theta, 0).unwrap();
            let f_lambda = e_r - lambda * kl;
            let f_scaled = per_prompt_objective(&scaled, &theta, 0).unwrap();
            assert!(
                (f_lambda - lambda * f_scaled).abs() < 1e-12,
                "lambda-objective {f_lambda} vs lambda*rescaled {}",
                lambda * f_scaled
            );
        }
    }

    #[test]
    fn sampler_respects_weights() {
        use crate::rng::stream_rng;
        let env = Environment::new(
            vec![
                ContextSpec {
                    features: vec![vec![1.0]],
                    ref_probs: vec![1.0],
                },
                ContextSpec {
                    features: vec![vec![-1.0]],
                    ref_probs: vec![1.0],
                },
            ],
            vec![1.0],
            1.0,
            1.0,
            Some(vec![0.9, 0.1]),
        )
        .unwrap();
        let mut rng = stream_rng(1, 1);
        let mut hits = [0usize; 2];
        for _ in 0..20_000 {
            hits[env.sample_context(&mut rng)] += 1;
        }
        let frac = hits[0] as f64 / 20_000.0;
        assert!((frac - 0.9).abs() < 0.01, "frac={frac}");
    }
}
