//! Gradient ascent and stochastic gradient ascent with the step schedules,
//! output-selection rule, and bound assertions used by the experiments.
//!
//! GA uses the constant step `1/L_f`; SGA uses `1/(2 L_f sqrt(t))` with a
//! uniformly sampled dataset index per step. Both select as output the
//! iterate with the smallest full empirical gradient norm (earliest iterate
//! on ties). For SGA the full gradient is only evaluated every `stride`
//! steps to cap cost; stride 1 recovers the every-step rule.
//!
//! Two bounds are asserted on every run rather than merely tested: all
//! iterates stay inside the radius-`3D` ball, and for GA the selected
//! iterate satisfies `||grad||^2 <= 12 L_f R C / T + 1e-9`.

use crate::coverage::column_space_projector;
use crate::gradients::{covariance_weighted, gradient_weighted_into, GradScratch};
use crate::linalg::{axpy, norm2, sub};
use crate::model::{Dataset, Environment, ModelError, ParamVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("optimizer needs at least one iteration")]
    ZeroIterations,
    #[error("initial parameter norm {norm} exceeds the D-ball radius {bound}")]
    InitOutsideBall { norm: f64, bound: f64 },
    #[error("trace has no recorded iterates")]
    EmptyTrace,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    Ga,
    Sga,
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OptimizerKind::Ga => write!(f, "GA"),
            OptimizerKind::Sga => write!(f, "SGA"),
        }
    }
}

/// Step-size rule attached to a trace for provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaRule {
    /// `eta = value` every step.
    Constant(f64),
    /// `eta_t = base / sqrt(t)`, `t` starting at 1.
    InverseSqrt(f64),
}

/// What produced a trace: algorithm, horizon, seed, stride.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub kind: OptimizerKind,
    pub eta: EtaRule,
    pub t: u64,
    pub seed: Option<u64>,
    /// Full-gradient evaluation stride (1 for GA).
    pub stride: u64,
}

/// Recorded optimizer history: a thinned set of iterates with their full
/// gradient norms, plus the index of the selected output.
///
/// The selected iterate is always among the records, so
/// `grad_norms[selected_index]` is the minimum over `grad_norms`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerTrace {
    pub iterates: Vec<ParamVector>,
    pub grad_norms: Vec<f64>,
    /// 1-based global step index of each record.
    pub steps: Vec<u64>,
    pub selected_index: usize,
    pub schedule: Schedule,
}

impl OptimizerTrace {
    pub fn selected(&self) -> &ParamVector {
        &self.iterates[self.selected_index]
    }

    pub fn selected_grad_norm(&self) -> f64 {
        self.grad_norms[self.selected_index]
    }

    pub fn len(&self) -> usize {
        self.iterates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterates.is_empty()
    }
}

/// The iterate with the smallest recorded full-gradient norm; ties go to the
/// earliest record.
pub fn select_output(trace: &OptimizerTrace) -> Result<ParamVector, OptimError> {
    if trace.iterates.is_empty() {
        return Err(OptimError::EmptyTrace);
    }
    let mut best = 0;
    for i in 1..trace.grad_norms.len() {
        if trace.grad_norms[i] < trace.grad_norms[best] {
            best = i;
        }
    }
    Ok(trace.iterates[best].clone())
}

/// At most `cap` record steps covering `1..=t`: every step when `t <= cap`,
/// otherwise a geometric grid that always contains 1 and `t`.
pub(crate) fn record_steps(t: u64, cap: usize) -> Vec<u64> {
    assert!(t >= 1 && cap >= 2);
    if t <= cap as u64 {
        return (1..=t).collect();
    }
    let mut steps = Vec::with_capacity(cap);
    let log_t = (t as f64).ln();
    let mut prev = 0u64;
    for k in 0..cap {
        let raw = (log_t * k as f64 / (cap - 1) as f64).exp().round() as u64;
        let step = raw.clamp(prev + 1, t);
        steps.push(step);
        prev = step;
        if step == t {
            break;
        }
    }
    if *steps.last().unwrap() != t {
        steps.push(t);
    }
    steps
}

const MAX_TRACE_RECORDS: usize = 10_000;
/// Slack on the `3D` iterate-norm assertion.
const BALL_TOL: f64 = 1e-10;

fn validate_init(env: &Environment, init: &ParamVector) -> Result<(), OptimError> {
    let norm = init.norm();
    let bound = env.param_bound();
    if norm > bound + 1e-12 {
        return Err(OptimError::InitOutsideBall { norm, bound });
    }
    if init.as_slice().len() != env.dim() {
        return Err(OptimError::Model(ModelError::DimMismatch {
            got: init.as_slice().len(),
            want: env.dim(),
        }));
    }
    Ok(())
}

struct BestIterate {
    theta: Vec<f64>,
    norm: f64,
    step: u64,
}

impl BestIterate {
    fn offer(&mut self, theta: &[f64], norm: f64, step: u64) {
        if norm < self.norm {
            self.theta.copy_from_slice(theta);
            self.norm = norm;
            self.step = step;
        }
    }
}

/// Observer invoked at caller-supplied checkpoint steps with
/// `(step, best_theta_so_far, best_grad_norm_so_far)`.
pub(crate) type CheckpointFn<'a> = &'a mut dyn FnMut(u64, &[f64], f64);

fn build_trace(
    kind: OptimizerKind,
    eta: EtaRule,
    t: u64,
    seed: Option<u64>,
    stride: u64,
    radius: f64,
    mut records: Vec<(u64, Vec<f64>, f64)>,
    best: BestIterate,
) -> OptimizerTrace {
    if !records.iter().any(|(s, _, _)| *s == best.step) {
        records.push((best.step, best.theta.clone(), best.norm));
        records.sort_by_key(|(s, _, _)| *s);
    }
    let mut iterates = Vec::with_capacity(records.len());
    let mut grad_norms = Vec::with_capacity(records.len());
    let mut steps = Vec::with_capacity(records.len());
    let mut selected_index = 0;
    for (i, (s, theta, gn)) in records.into_iter().enumerate() {
        if s == best.step {
            selected_index = i;
        }
        iterates.push(ParamVector::new_trusted(theta, radius));
        grad_norms.push(gn);
        steps.push(s);
    }
    OptimizerTrace {
        iterates,
        grad_norms,
        steps,
        selected_index,
        schedule: Schedule {
            kind,
            eta,
            t,
            seed,
            stride,
        },
    }
}

pub(crate) fn run_ga_checkpointed(
    env: &Environment,
    s: &Dataset,
    theta_init: &ParamVector,
    t: u64,
    checkpoints: &[u64],
    mut on_checkpoint: Option<CheckpointFn<'_>>,
) -> Result<OptimizerTrace, OptimError> {
    if t == 0 {
        return Err(OptimError::ZeroIterations);
    }
    validate_init(env, theta_init)?;
    let weighted = s.weighted_unique();
    let lf = crate::gradients::smoothness_constant(env.radius(), env.feature_bound());
    let eta = 1.0 / lf;
    let ball = env.radius() + BALL_TOL;

    let d = env.dim();
    let mut theta = theta_init.as_slice().to_vec();
    let mut grad = vec![0.0; d];
    let mut tmp = Vec::with_capacity(d);
    let mut scratch = GradScratch::default();

    let plan = record_steps(t, MAX_TRACE_RECORDS);
    let mut plan_iter = plan.iter().copied().peekable();
    let mut cp_iter = checkpoints.iter().copied().filter(|&c| c <= t).peekable();

    let mut records: Vec<(u64, Vec<f64>, f64)> = Vec::with_capacity(plan.len() + 1);
    let mut best = BestIterate {
        theta: theta.clone(),
        norm: f64::INFINITY,
        step: 1,
    };

    for step in 1..=t {
        gradient_weighted_into(env, &theta, &weighted, &mut grad, &mut scratch, &mut tmp);
        let gn = norm2(&grad);
        best.offer(&theta, gn, step);
        if plan_iter.peek() == Some(&step) {
            plan_iter.next();
            records.push((step, theta.clone(), gn));
        }
        while cp_iter.peek() == Some(&step) {
            cp_iter.next();
            if let Some(cb) = on_checkpoint.as_mut() {
                cb(step, &best.theta, best.norm);
            }
        }
        axpy(eta, &grad, &mut theta);
        let norm = norm2(&theta);
        assert!(
            norm <= ball,
            "GA iterate left the 3D ball: {norm} > {ball}"
        );
    }

    // Selected-output guarantee: min_t ||grad||^2 <= 12 L_f R C / T + 1e-9.
    let bound = 12.0 * lf * env.radius() * env.feature_bound() / t as f64 + 1e-9;
    assert!(
        best.norm * best.norm <= bound,
        "GA gradient-norm bound violated: {} > {}",
        best.norm * best.norm,
        bound
    );

    Ok(build_trace(
        OptimizerKind::Ga,
        EtaRule::Constant(eta),
        t,
        None,
        1,
        env.radius(),
        records,
        best,
    ))
}

/// Gradient ascent for `t` steps from `theta_init` (which must lie in the
/// D-ball) with step `1/L_f`.
pub fn run_ga(
    env: &Environment,
    s: &Dataset,
    theta_init: &ParamVector,
    t: u64,
) -> Result<OptimizerTrace, OptimError> {
    run_ga_checkpointed(env, s, theta_init, t, &[], None)
}

/// Default SGA full-gradient evaluation stride, `max(1, t / 10^4)`.
pub fn default_sga_stride(t: u64) -> u64 {
    (t / 10_000).max(1)
}

pub(crate) fn run_sga_checkpointed(
    env: &Environment,
    s: &Dataset,
    theta_init: &ParamVector,
    t: u64,
    seed: u64,
    stride: Option<u64>,
    checkpoints: &[u64],
    mut on_checkpoint: Option<CheckpointFn<'_>>,
) -> Result<OptimizerTrace, OptimError> {
    if t == 0 {
        return Err(OptimError::ZeroIterations);
    }
    validate_init(env, theta_init)?;
    let stride = stride.unwrap_or_else(|| default_sga_stride(t)).max(1);
    let weighted = s.weighted_unique();
    let lf = crate::gradients::smoothness_constant(env.radius(), env.feature_bound());
    let eta_base = 1.0 / (2.0 * lf);
    let ball = env.radius() + BALL_TOL;

    let d = env.dim();
    let n = s.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = theta_init.as_slice().to_vec();
    let mut grad = vec![0.0; d];
    let mut full_grad = vec![0.0; d];
    let mut tmp = Vec::with_capacity(d);
    let mut scratch = GradScratch::default();

    let mut cp_iter = checkpoints.iter().copied().filter(|&c| c <= t).peekable();
    let mut records: Vec<(u64, Vec<f64>, f64)> = Vec::new();
    let mut best = BestIterate {
        theta: theta.clone(),
        norm: f64::INFINITY,
        step: 1,
    };

    for step in 1..=t {
        let at_stride = (step - 1) % stride == 0 || step == t;
        let at_checkpoint = cp_iter.peek() == Some(&step);
        if at_stride || at_checkpoint {
            gradient_weighted_into(env, &theta, &weighted, &mut full_grad, &mut scratch, &mut tmp);
            let gn = norm2(&full_grad);
            best.offer(&theta, gn, step);
            records.push((step, theta.clone(), gn));
            let norm = norm2(&theta);
            assert!(norm <= ball, "SGA iterate left the 3D ball: {norm} > {ball}");
        }
        while cp_iter.peek() == Some(&step) {
            cp_iter.next();
            if let Some(cb) = on_checkpoint.as_mut() {
                cb(step, &best.theta, best.norm);
            }
        }
        let pick = rng.random_range(0..n);
        let x = s.indices()[pick];
        grad.fill(0.0);
        crate::gradients::context_gradient_accum(
            env.context_unchecked(x),
            &theta,
            &mut grad,
            &mut scratch,
        );
        let eta = eta_base / (step as f64).sqrt();
        axpy(eta, &grad, &mut theta);
        debug_assert!(norm2(&theta) <= ball, "SGA iterate left the 3D ball");
    }

    // Cap the trace like GA does; keep the earliest records plus the best.
    if records.len() > MAX_TRACE_RECORDS {
        let keep = record_steps(t, MAX_TRACE_RECORDS);
        let mut keep_iter = keep.iter().copied().peekable();
        records.retain(|(s, _, _)| {
            while let Some(&k) = keep_iter.peek() {
                if k < *s {
                    keep_iter.next();
                } else {
                    break;
                }
            }
            keep_iter.peek() == Some(s)
        });
    }

    Ok(build_trace(
        OptimizerKind::Sga,
        EtaRule::InverseSqrt(eta_base),
        t,
        Some(seed),
        stride,
        env.radius(),
        records,
        best,
    ))
}

/// Stochastic gradient ascent for `t` steps; reproducible given `seed`.
///
/// The output rule evaluates the full gradient every `stride` steps (default
/// `max(1, t/10^4)`); pass `Some(1)` to recover the every-step rule.
pub fn run_sga(
    env: &Environment,
    s: &Dataset,
    theta_init: &ParamVector,
    t: u64,
    seed: u64,
    stride: Option<u64>,
) -> Result<OptimizerTrace, OptimError> {
    run_sga_checkpointed(env, s, theta_init, t, seed, stride, &[], None)
}

/// Options for [`find_stationary_with`].
#[derive(Debug, Clone)]
pub struct StationaryOptions {
    /// Gradient-norm tolerance declaring stationarity.
    pub tol: f64,
    /// Iteration cap; exceeding it flags (not fails) the result.
    pub t_max: u64,
    /// Start point inside the D-ball; zero when absent.
    pub anchor: Option<Vec<f64>>,
    /// Jump to the column-space candidate before iterating (see below).
    pub warm_start: bool,
}

impl Default for StationaryOptions {
    fn default() -> Self {
        StationaryOptions {
            tol: 1e-8,
            t_max: 200_000,
            anchor: None,
            warm_start: true,
        }
    }
}

/// A stationary-point proxy with its achieved gradient norm.
#[derive(Debug, Clone)]
pub struct StationaryResult {
    pub theta: ParamVector,
    pub grad_norm: f64,
    pub iterations: u64,
    /// Whether `grad_norm <= tol`; a miss is reported, never silently
    /// ignored, since downstream bounds are parameterized by the achieved
    /// norm.
    pub converged: bool,
}

/// The column-space stationary candidate reachable from `anchor`:
/// `anchor + P (theta_star - anchor)` with `P` the projector onto
/// `C(V_S(anchor))`.
///
/// Gradient-ascent updates always lie in the column space of the current
/// covariance, and with per-context linearly independent features that space
/// does not move with `theta`; the candidate is then an exact stationary
/// point (the limit of GA from `anchor`). When the independence premise
/// fails the candidate is merely a start point and the GA loop takes over.
pub fn stationary_point_exact(env: &Environment, s: &Dataset, anchor: &[f64]) -> Vec<f64> {
    let weighted = s.weighted_unique();
    let v = covariance_weighted(env, anchor, &weighted);
    let p = column_space_projector(&v);
    let delta = sub(env.theta_star(), anchor);
    let mut out = anchor.to_vec();
    let moved = p.matvec(&delta);
    axpy(1.0, &moved, &mut out);
    out
}

/// Runs GA until the full gradient norm falls below `tol` (or `t_max` steps
/// elapse) and returns the best iterate seen, with default options.
pub fn find_stationary(
    env: &Environment,
    s: &Dataset,
    tol: f64,
    t_max: u64,
) -> Result<StationaryResult, OptimError> {
    find_stationary_with(
        env,
        s,
        StationaryOptions {
            tol,
            t_max,
            ..StationaryOptions::default()
        },
    )
}

pub fn find_stationary_with(
    env: &Environment,
    s: &Dataset,
    opts: StationaryOptions,
) -> Result<StationaryResult, OptimError> {
    assert!(opts.tol > 0.0, "tolerance must be positive");
    let d = env.dim();
    let anchor = match &opts.anchor {
        Some(a) => {
            let pv = ParamVector::new(a.clone(), env.param_bound())
                .map_err(|_| OptimError::InitOutsideBall {
                    norm: norm2(a),
                    bound: env.param_bound(),
                })?;
            pv.into_values()
        }
        None => vec![0.0; d],
    };
    let weighted = s.weighted_unique();
    let lf = crate::gradients::smoothness_constant(env.radius(), env.feature_bound());
    let eta = 1.0 / lf;
    let ball = env.radius() + BALL_TOL;

    let mut theta = if opts.warm_start {
        stationary_point_exact(env, s, &anchor)
    } else {
        anchor
    };
    // The warm-start candidate satisfies
    // ||cand - theta_star|| <= ||anchor - theta_star|| <= 2D, so it and all
    // subsequent GA iterates stay inside the 3D ball.
    assert!(norm2(&theta) <= ball);

    let mut grad = vec![0.0; d];
    let mut tmp = Vec::with_capacity(d);
    let mut scratch = GradScratch::default();

    let mut best_theta = theta.clone();
    let mut best_norm = f64::INFINITY;
    let mut iterations = 0u64;
    loop {
        gradient_weighted_into(env, &theta, &weighted, &mut grad, &mut scratch, &mut tmp);
        let gn = norm2(&grad);
        if gn < best_norm {
            best_norm = gn;
            best_theta.copy_from_slice(&theta);
        }
        if gn <= opts.tol || iterations >= opts.t_max {
            break;
        }
        axpy(eta, &grad, &mut theta);
        let norm = norm2(&theta);
        assert!(norm <= ball, "iterate left the 3D ball: {norm} > {ball}");
        iterations += 1;
    }
    let converged = best_norm <= opts.tol;
    Ok(StationaryResult {
        theta: ParamVector::new_trusted(best_theta, env.radius()),
        grad_norm: best_norm,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{gen_env_random, gen_env_rank_deficient};
    use crate::gradients::smoothness_constant;
    use crate::model::{empirical_objective, ContextSpec};
    use crate::rng::stream_rng;
    use rand::Rng;

    fn line_env() -> Environment {
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
    fn ga_fixed_point_at_ground_truth() {
        let env = line_env();
        let s = Dataset::new(vec![0], &env).unwrap();
        let init = ParamVector::new(vec![1.0], 1.0).unwrap();
        let trace = run_ga(&env, &s, &init, 50).unwrap();
        for (iterate, gn) in trace.iterates.iter().zip(trace.grad_norms.iter()) {
            assert!((iterate.as_slice()[0] - 1.0).abs() < 1e-15);
            assert!(*gn < 1e-15);
        }
    }

    #[test]
    fn ga_matches_independent_scalar_loop() {
        // Independent oracle: theta' = theta + (1/L_f) sech^2(theta) (1 - theta),
        // since the two-point covariance at +-1 features is 1/cosh^2(theta).
        let env = line_env();
        let s = Dataset::new(vec![0], &env).unwrap();
        let init = ParamVector::zeros(1, 1.0);
        let t = 1000;
        let trace = run_ga(&env, &s, &init, t).unwrap();

        let lf = smoothness_constant(3.0, 1.0);
        let mut theta = 0.0f64;
        let mut oracle = vec![theta];
        for _ in 1..t {
            let v = 1.0 / theta.cosh().powi(2);
            theta += (1.0 / lf) * v * (1.0 - theta);
            oracle.push(theta);
        }
        assert_eq!(trace.iterates.len(), t as usize);
        for (rec, expect) in trace.iterates.iter().zip(oracle.iter()) {
            assert!((rec.as_slice()[0] - expect).abs() < 1e-12);
        }
        // converges within 1e-3 of theta_star and distance is nonincreasing
        let last = trace.iterates.last().unwrap().as_slice()[0];
        assert!((last - 1.0).abs() <= 1e-3);
        let mut prev = f64::INFINITY;
        for rec in &trace.iterates {
            let dist = (rec.as_slice()[0] - 1.0).abs();
            assert!(dist <= prev + 1e-15);
            prev = dist;
        }
    }

    #[test]
    fn ga_bound_instance() {
        // L_f = 9, R = 1, C = 1 would give 12*9/108 = 1; here we only check
        // the arithmetic of the bound expression itself.
        let bound: f64 = 12.0 * 9.0 * 1.0 * 1.0 / 108.0;
        assert!((bound - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ga_ascent_property() {
        let mut rng = stream_rng(301, 0);
        for _ in 0..5 {
            let env = gen_env_random(&mut rng);
            let n = rng.random_range(1..=6);
            let s = Dataset::sample_iid(&env, n, &mut rng);
            let init = ParamVector::zeros(env.dim(), env.param_bound());
            let trace = run_ga(&env, &s, &init, 200).unwrap();
            let mut prev = f64::NEG_INFINITY;
            for it in &trace.iterates {
                let j = empirical_objective(&env, it.as_slice(), &s);
                assert!(j >= prev - 1e-12, "ascent violated: {j} < {prev}");
                prev = j;
            }
        }
    }

    #[test]
    fn ga_rejects_bad_input() {
        let env = line_env();
        let s = Dataset::new(vec![0], &env).unwrap();
        let init = ParamVector::zeros(1, 1.0);
        assert!(matches!(
            run_ga(&env, &s, &init, 0),
            Err(OptimError::ZeroIterations)
        ));
        let oversized = ParamVector::new(vec![2.5], 3.0).unwrap();
        assert!(matches!(
            run_ga(&env, &s, &oversized, 10),
            Err(OptimError::InitOutsideBall { .. })
        ));
    }

    #[test]
    fn sga_single_context_dataset_tracks_ga_direction() {
        // n = 1: every stochastic gradient equals the full gradient, so SGA
        // is GA with the decaying schedule; it still converges toward
        // theta_star and records zero noise at the fixed point.
        let env = line_env();
        let s = Dataset::new(vec![0], &env).unwrap();
        let init = ParamVector::zeros(1, 1.0);
        let trace = run_sga(&env, &s, &init, 20_000, 7, Some(1)).unwrap();
        let last = trace.iterates.last().unwrap().as_slice()[0];
        assert!((last - 1.0).abs() < 0.05, "last={last}");

        let at_star = ParamVector::new(vec![1.0], 1.0).unwrap();
        let trace = run_sga(&env, &s, &at_star, 100, 7, Some(1)).unwrap();
        for gn in &trace.grad_norms {
            assert!(*gn < 1e-15);
        }
    }

    #[test]
    fn sga_is_bit_reproducible() {
        let mut rng = stream_rng(302, 0);
        let env = gen_env_random(&mut rng);
        let s = Dataset::sample_iid(&env, 5, &mut rng);
        let init = ParamVector::zeros(env.dim(), env.param_bound());
        let a = run_sga(&env, &s, &init, 5_000, 99, None).unwrap();
        let b = run_sga(&env, &s, &init, 5_000, 99, None).unwrap();
        assert_eq!(a, b);
        let c = run_sga(&env, &s, &init, 5_000, 100, None).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn select_output_rules() {
        let env = line_env();
        let mk = |norms: &[f64]| OptimizerTrace {
            iterates: norms
                .iter()
                .map(|_| ParamVector::zeros(1, 3.0))
                .collect(),
            grad_norms: norms.to_vec(),
            steps: (1..=norms.len() as u64).collect(),
            selected_index: 0,
            schedule: Schedule {
                kind: OptimizerKind::Ga,
                eta: EtaRule::Constant(1.0),
                t: norms.len() as u64,
                seed: None,
                stride: 1,
            },
        };
        let _ = env;
        // monotone norms: last iterate wins
        let tr = mk(&[3.0, 2.0, 1.0]);
        assert_eq!(select_output(&tr).unwrap(), tr.iterates[2]);
        // all equal: first iterate (tie rule)
        let tr = mk(&[1.0, 1.0, 1.0]);
        let chosen = select_output(&tr).unwrap();
        assert_eq!(chosen, tr.iterates[0]);
        // norms (3, 1, 2): middle index
        let tr = mk(&[3.0, 1.0, 2.0]);
        assert_eq!(select_output(&tr).unwrap(), tr.iterates[1]);
        // empty trace errors
        let mut tr = mk(&[1.0]);
        tr.iterates.clear();
        tr.grad_norms.clear();
        assert!(matches!(select_output(&tr), Err(OptimError::EmptyTrace)));
    }

    #[test]
    fn trace_selected_is_min_and_iterates_bounded() {
        let mut rng = stream_rng(303, 0);
        for _ in 0..5 {
            let env = gen_env_random(&mut rng);
            let s = Dataset::sample_iid(&env, 4, &mut rng);
            let init = ParamVector::zeros(env.dim(), env.param_bound());
            for trace in [
                run_ga(&env, &s, &init, 300).unwrap(),
                run_sga(&env, &s, &init, 300, 5, Some(7)).unwrap(),
            ] {
                let min = trace
                    .grad_norms
                    .iter()
                    .cloned()
                    .fold(f64::INFINITY, f64::min);
                assert_eq!(trace.selected_grad_norm(), min);
                for it in &trace.iterates {
                    assert!(it.norm() <= env.radius() + 1e-10);
                }
            }
        }
    }

    #[test]
    fn find_stationary_immediate_at_ground_truth() {
        let env = line_env();
        let s = Dataset::new(vec![0], &env).unwrap();
        let res = find_stationary_with(
            &env,
            &s,
            StationaryOptions {
                anchor: Some(vec![1.0]),
                warm_start: false,
                ..StationaryOptions::default()
            },
        )
        .unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 0);
        assert!((res.theta.as_slice()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn find_stationary_recovers_on_positive_definite_instance() {
        // full-coverage instance: V_S positive definite, so the stationary
        // point is theta_star and ||theta - theta_star|| <= 10 tol / sigma_min
        let env = Environment::new(
            vec![
                ContextSpec {
                    features: vec![vec![1.0, 0.0], vec![-1.0, 0.0]],
                    ref_probs: vec![0.5, 0.5],
                },
                ContextSpec {
                    features: vec![vec![0.0, 1.0], vec![0.0, -1.0]],
                    ref_probs: vec![0.5, 0.5],
                },
            ],
            vec![0.6, -0.3],
            1.0,
            1.0,
            None,
        )
        .unwrap();
        let s = Dataset::new(vec![0, 1], &env).unwrap();
        for warm in [false, true] {
            let res = find_stationary_with(
                &env,
                &s,
                StationaryOptions {
                    tol: 1e-8,
                    t_max: 2_000_000,
                    anchor: None,
                    warm_start: warm,
                },
            )
            .unwrap();
            assert!(res.converged, "warm={warm}");
            let v = crate::gradients::empirical_covariance(&env, res.theta.as_slice(), &s);
            let err = norm2(&sub(res.theta.as_slice(), env.theta_star()));
            assert!(err <= 10.0 * 1e-8 / v.sigma_min().max(1e-12), "err={err}");
        }
    }

    #[test]
    fn find_stationary_multistart_value_agreement() {
        // rank-deficient instance: different anchors give different stationary
        // points whose empirical objectives agree
        let env = gen_env_rank_deficient(10, 6, 40, 424242).unwrap();
        let s = Dataset::from_range(0, 4, &env).unwrap();
        let mut rng = stream_rng(304, 0);
        let mut values = Vec::new();
        for _ in 0..4 {
            let mut anchor: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = norm2(&anchor);
            let target = rng.random_range(0.0..env.param_bound());
            for v in &mut anchor {
                *v *= target / norm;
            }
            let res = find_stationary_with(
                &env,
                &s,
                StationaryOptions {
                    anchor: Some(anchor),
                    ..StationaryOptions::default()
                },
            )
            .unwrap();
            assert!(res.converged);
            values.push(empirical_objective(&env, res.theta.as_slice(), &s));
        }
        let spread = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - values.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread <= 1e-8, "J_S spread {spread}");
    }

    #[test]
    fn warm_start_candidate_is_stationary_under_independence() {
        let env = gen_env_rank_deficient(8, 5, 30, 7).unwrap();
        let s = Dataset::from_range(0, 3, &env).unwrap();
        let cand = stationary_point_exact(&env, &s, &vec![0.0; 8]);
        let g = crate::gradients::gradient_closed_form(&env, &cand, &s);
        assert!(norm2(&g) <= 1e-10, "gradient at candidate: {}", norm2(&g));
    }

    #[test]
    fn record_steps_shapes() {
        assert_eq!(record_steps(5, 10), vec![1, 2, 3, 4, 5]);
        let long = record_steps(1_000_000, 100);
        assert!(long.len() <= 101);
        assert_eq!(*long.first().unwrap(), 1);
        assert_eq!(*long.last().unwrap(), 1_000_000);
        assert!(long.windows(2).all(|w| w[0] < w[1]));
    }
}
