//! Empirical uniform-stability estimation: train on a dataset and on a
//! one-example-replaced neighbor with shared algorithmic randomness, then
//! take the worst per-prompt objective difference over a probe set.

use super::fits::{fit_linear, FitRecord};
use super::generators::gen_env_rank_deficient;
use super::{ExperimentError, Provenance};
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::coverage::condition_ratio;
use crate::gradients::empirical_covariance;
use crate::linalg::{median, quartiles};
use crate::model::{per_prompt_objective, Dataset, Environment, ParamVector};
use crate::optim::{find_stationary_with, run_ga, run_sga, OptimizerKind, StationaryOptions};
use crate::rng::{mix64, role, stream_rng};
use rand::Rng;
use rayon::prelude::*;

/// Stability estimate at one sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityEstimate {
    /// `max_x |f_{theta_S}(x) - f_{theta_S'}(x)|` per neighbor pair.
    pub per_pair: Vec<f64>,
    /// Max over pairs: the empirical uniform-stability value.
    pub estab_max: f64,
    /// Max sampled condition ratio over same-dataset pairs.
    pub gamma_ss: f64,
    /// Max sampled condition ratio over neighbor pairs.
    pub gamma_ss_prime: f64,
}

fn train(
    env: &Environment,
    s: &Dataset,
    optimizer: OptimizerKind,
    t: u64,
    opt_seed: u64,
    stride: Option<u64>,
) -> Result<ParamVector, ExperimentError> {
    let init = ParamVector::zeros(env.dim(), env.param_bound());
    let trace = match optimizer {
        OptimizerKind::Ga => run_ga(env, s, &init, t)?,
        OptimizerKind::Sga => run_sga(env, s, &init, t, opt_seed, stride)?,
    };
    Ok(trace.selected().clone())
}

/// Estimates the uniform stability of the chosen optimizer at sample size
/// `n` from `pairs` neighbor-dataset pairs.
///
/// Per pair: draw `S` from the environment law, replace one uniformly chosen
/// entry with a fresh draw to get `S'`, train on both with identical
/// optimizer randomness, and take the max absolute per-prompt objective
/// difference over the probe set. The reported value is the max over pairs.
#[allow(clippy::too_many_arguments)]
pub fn estimate_stability(
    env: &Environment,
    probe: &Dataset,
    n: usize,
    pairs: usize,
    optimizer: OptimizerKind,
    t: u64,
    stride: Option<u64>,
    seed: u64,
) -> Result<StabilityEstimate, ExperimentError> {
    if n < 2 {
        return Err(ExperimentError::InvalidParam(
            "stability estimation needs n >= 2".into(),
        ));
    }
    if pairs == 0 {
        return Err(ExperimentError::InvalidParam(
            "stability estimation needs at least one pair".into(),
        ));
    }
    let probe_unique: Vec<usize> = probe.weighted_unique().iter().map(|&(x, _)| x).collect();

    struct PairOut {
        value: f64,
        ratio_same: f64,
        ratio_neighbor: f64,
    }

    let outs: Result<Vec<PairOut>, ExperimentError> = (0..pairs)
        .into_par_iter()
        .map(|pair| {
            let pair_seed = mix64(seed, pair as u64);
            let mut rng = stream_rng(pair_seed, role::DATA);
            let s = Dataset::sample_iid(env, n, &mut rng);
            // position and replacement live on their own stream at a fixed
            // offset, so a pair keeps the same perturbation as n varies when
            // the caller shares pair seeds across a sweep
            let mut perturb_rng = stream_rng(pair_seed, role::PROBE);
            let pos = ((perturb_rng.random::<f64>() * n as f64) as usize).min(n - 1);
            let replacement = env.sample_context(&mut perturb_rng);
            let s_prime = s.replace(pos, replacement);

            let opt_seed = mix64(pair_seed, role::OPTIMIZER);
            let theta_a = train(env, &s, optimizer, t, opt_seed, stride)?;
            let theta_b = train(env, &s_prime, optimizer, t, opt_seed, stride)?;

            let mut worst = 0.0f64;
            for &x in &probe_unique {
                let fa = per_prompt_objective(env, theta_a.as_slice(), x)?;
                let fb = per_prompt_objective(env, theta_b.as_slice(), x)?;
                worst = worst.max((fa - fb).abs());
            }

            let stat = find_stationary_with(env, &s, StationaryOptions::default())?;
            let v_stat = empirical_covariance(env, stat.theta.as_slice(), &s);
            let v_a = empirical_covariance(env, theta_a.as_slice(), &s);
            let v_b = empirical_covariance(env, theta_b.as_slice(), &s);
            let ratio_same = condition_ratio(&v_stat, &v_a)
                .expect("condition ratio must be finite over sampled pairs");
            let ratio_neighbor = condition_ratio(&v_stat, &v_b)
                .expect("condition ratio must be finite over sampled pairs");

            Ok(PairOut {
                value: worst,
                ratio_same,
                ratio_neighbor,
            })
        })
        .collect();
    let outs = outs?;

    let per_pair: Vec<f64> = outs.iter().map(|o| o.value).collect();
    Ok(StabilityEstimate {
        estab_max: per_pair.iter().cloned().fold(0.0, f64::max),
        gamma_ss: outs.iter().map(|o| o.ratio_same).fold(0.0, f64::max),
        gamma_ss_prime: outs.iter().map(|o| o.ratio_neighbor).fold(0.0, f64::max),
        per_pair,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRow {
    pub n: usize,
    pub t_steps: u64,
    pub per_pair: Vec<f64>,
    pub estab_max: f64,
    pub median: f64,
    pub iqr: (f64, f64),
    pub gamma_ss: f64,
    pub gamma_ss_prime: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub rows: Vec<StabilityRow>,
    /// Least squares of the per-n stability maxima against `n^{-1/2}`.
    pub fit: FitRecord,
    pub provenance: Provenance,
}

/// Stability sweep over the configured sample sizes. One pool environment is
/// generated for the whole sweep (its slots double as the probe set). The
/// optimizer horizon is `t_max` for every sample size: with an n-dependent
/// horizon the trained map either stays far from stationarity at small n or
/// collapses onto the data-independent stationary limit at large n, and in
/// both regimes the measured sensitivity stops reflecting the sample-size
/// rate.
pub fn sweep_stability(cfg: &ExperimentConfig) -> Result<StabilityReport, ExperimentError> {
    if cfg.kind != ExperimentKind::Stability {
        return Err(ExperimentError::InvalidParam(format!(
            "config kind is {}, expected stability",
            cfg.kind
        )));
    }
    cfg.validate()
        .map_err(|e| ExperimentError::InvalidParam(e.to_string()))?;

    let env_seed = mix64(cfg.master_seed, 0x57A8);
    let env = gen_env_rank_deficient(cfg.d, cfg.d_eff, cfg.test_set_size, env_seed)?;
    let probe = Dataset::from_range(0, cfg.test_set_size, &env)?;

    let mut rows = Vec::with_capacity(cfg.n_list.len());
    for &n in &cfg.n_list {
        let t = cfg.t_max;
        // the pair streams are shared across the n grid (nested samples), so
        // a pair's sensitivity decays smoothly along n instead of being
        // redrawn at every grid point
        let est = estimate_stability(
            &env,
            &probe,
            n,
            cfg.seeds,
            cfg.optimizer,
            t,
            cfg.stride,
            mix64(cfg.master_seed, 1000),
        )?;
        rows.push(StabilityRow {
            n,
            t_steps: t,
            median: median(&est.per_pair),
            iqr: quartiles(&est.per_pair),
            estab_max: est.estab_max,
            gamma_ss: est.gamma_ss,
            gamma_ss_prime: est.gamma_ss_prime,
            per_pair: est.per_pair,
        });
    }

    let xs: Vec<f64> = cfg.n_list.iter().map(|&n| 1.0 / (n as f64).sqrt()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.estab_max).collect();
    let fit = fit_linear(&xs, &ys)?;

    Ok(StabilityReport {
        rows,
        fit,
        provenance: Provenance::new(cfg.master_seed, cfg.canonical_text()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn identical_replacement_gives_zero() {
        // if the neighbor equals the original dataset the trained parameters
        // coincide and the pair value is exactly zero
        let env = gen_env_rank_deficient(6, 4, 50, 3).unwrap();
        let probe = Dataset::from_range(0, 50, &env).unwrap();
        let s = Dataset::new(vec![1, 2, 3], &env).unwrap();
        let s_prime = s.replace(1, 2); // still within, but build true-equal case below
        let _ = s_prime;
        let init = ParamVector::zeros(6, env.param_bound());
        let a = run_ga(&env, &s, &init, 100).unwrap();
        let b = run_ga(&env, &s.replace(0, 1), &init, 100).unwrap();
        let mut worst = 0.0f64;
        for &x in probe.indices() {
            let fa = per_prompt_objective(&env, a.selected().as_slice(), x).unwrap();
            let fb = per_prompt_objective(&env, b.selected().as_slice(), x).unwrap();
            worst = worst.max((fa - fb).abs());
        }
        assert_eq!(worst, 0.0, "S' built by replacing x_0 with its own value");
    }

    #[test]
    fn stability_sweep_runs_and_is_deterministic() {
        let cfg = parse_config(
            "kind=stability\nd=8\nd_eff=5\nn_list=3,6\nseeds=3\ntest_set_size=1000\nmaster_seed=4",
        )
        .unwrap();
        let a = sweep_stability(&cfg).unwrap();
        assert_eq!(a.rows.len(), 2);
        for row in &a.rows {
            assert_eq!(row.per_pair.len(), 3);
            assert!(row.estab_max >= row.median);
            assert!(row.estab_max.is_finite());
            assert!(row.gamma_ss.is_finite() && row.gamma_ss_prime.is_finite());
        }
        let b = sweep_stability(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_tiny_n() {
        let env = gen_env_rank_deficient(6, 4, 30, 3).unwrap();
        let probe = Dataset::from_range(0, 30, &env).unwrap();
        assert!(estimate_stability(&env, &probe, 1, 2, OptimizerKind::Ga, 10, None, 0).is_err());
    }
}
