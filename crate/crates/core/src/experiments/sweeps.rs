//! Sweep drivers: coverage probability grids, suboptimality gap versus
//! sample size, and suboptimality gap versus optimization steps.
//!
//! The rank-deficient sweeps follow a pool-partition protocol: each seed
//! owns one pool of `test_set_size + max(n)` contexts drawn once. Slots
//! `[0, test_set_size)` form the seed's fixed evaluation set and the
//! training sample of size `n` is the next `n` slots, so along the `n` axis
//! a seed's samples are nested and every method sees common randomness. The
//! population objective of any parameter is its mean per-prompt objective
//! over the evaluation slots.

use super::coverage_prob::{exact_coverage_probability, mc_coverage_probability, MAX_EXACT_DIM};
use super::fits::{fit_linear, FitRecord};
use super::generators::{gen_env_rank_deficient, task_seed};
use super::{ExperimentError, Method, Provenance};
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::coverage::condition_ratio;
use crate::gradients::empirical_covariance;
use crate::linalg::{median, quartiles};
use crate::model::{population_objective, Dataset, Environment, ParamVector};
use crate::optim::{
    find_stationary_with, run_ga, run_ga_checkpointed, run_sga, run_sga_checkpointed,
    StationaryOptions,
};
use crate::rng::{mix64, role};
use rayon::prelude::*;

/// One replicate of one sweep cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GapSample {
    pub seed_index: usize,
    pub gap: f64,
    /// Full empirical gradient norm achieved by the selected output.
    pub grad_norm: f64,
    /// False when the stationary proxy stopped at its iteration cap above
    /// tolerance; the achieved norm is still reported.
    pub converged: bool,
    /// Sampled condition ratio
    /// `sigma_max(V_S(stat)) / (sigma_min_pos(V_S(stat)) sigma_min_pos(V_S(out)))`.
    pub condition_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapVsNRow {
    pub n: usize,
    pub method: Method,
    pub samples: Vec<GapSample>,
    pub median_gap: f64,
    pub iqr: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodFit {
    pub method: Method,
    pub fit: FitRecord,
}

/// Gap-versus-sample-size sweep results.
#[derive(Debug, Clone, PartialEq)]
pub struct GapVsNReport {
    pub rows: Vec<GapVsNRow>,
    /// Per-method least squares of median gap against `n^{-1/2}`.
    pub fits: Vec<MethodFit>,
    /// Per-method max sampled condition ratio; a lower bound on the
    /// corresponding supremum constant.
    pub gamma_ss: Vec<(Method, f64)>,
    pub provenance: Provenance,
}

impl GapVsNReport {
    pub fn fit_for(&self, method: Method) -> Option<FitRecord> {
        self.fits.iter().find(|f| f.method == method).map(|f| f.fit)
    }
}

struct GapTaskOut {
    stat: GapSample,
    ga: GapSample,
    sga: GapSample,
}

fn ga_steps_rule(n: usize) -> u64 {
    50 * (n as u64) * (n as u64)
}

fn sga_steps_rule(n: usize) -> u64 {
    10 * (n as u64).pow(4)
}

/// One seed's sweep across every `n`: the pool, ground truth, and evaluation
/// set are drawn once and shared, so the per-seed gap curves vary only
/// through the sample size.
fn gap_vs_n_seed_task(cfg: &ExperimentConfig, si: usize) -> Result<Vec<GapTaskOut>, ExperimentError> {
    let max_n = *cfg.n_list.iter().max().expect("validated nonempty");
    let run_seed = task_seed(cfg.master_seed, 0, cfg.seeds, si);
    let env = gen_env_rank_deficient(cfg.d, cfg.d_eff, cfg.test_set_size + max_n, run_seed)?;
    let test = Dataset::from_range(0, cfg.test_set_size, &env)?;
    let j_star = population_objective(&env, env.theta_star(), &test);
    let init = ParamVector::zeros(cfg.d, env.param_bound());

    let mut out = Vec::with_capacity(cfg.n_list.len());
    for &n in &cfg.n_list {
        let s = Dataset::from_range(cfg.test_set_size, n, &env)?;
        let gap_of = |theta: &[f64]| (j_star - population_objective(&env, theta, &test)).abs();

        let stat = find_stationary_with(
            &env,
            &s,
            StationaryOptions {
                tol: cfg.tol,
                ..StationaryOptions::default()
            },
        )?;
        let v_stat = empirical_covariance(&env, stat.theta.as_slice(), &s);
        let ratio_to = |theta: &[f64]| -> f64 {
            let v_out = empirical_covariance(&env, theta, &s);
            let ratio = condition_ratio(&v_stat, &v_out)
                .expect("condition ratio must be finite: covariance had no positive eigenvalue");
            assert!(ratio.is_finite());
            ratio
        };

        let ga_trace = run_ga(&env, &s, &init, ga_steps_rule(n))?;
        let sga_seed = mix64(mix64(run_seed, role::OPTIMIZER), n as u64);
        let sga_trace = run_sga(&env, &s, &init, sga_steps_rule(n), sga_seed, cfg.stride)?;

        out.push(GapTaskOut {
            stat: GapSample {
                seed_index: si,
                gap: gap_of(stat.theta.as_slice()),
                grad_norm: stat.grad_norm,
                converged: stat.converged,
                condition_ratio: ratio_to(stat.theta.as_slice()),
            },
            ga: GapSample {
                seed_index: si,
                gap: gap_of(ga_trace.selected().as_slice()),
                grad_norm: ga_trace.selected_grad_norm(),
                converged: true,
                condition_ratio: ratio_to(ga_trace.selected().as_slice()),
            },
            sga: GapSample {
                seed_index: si,
                gap: gap_of(sga_trace.selected().as_slice()),
                grad_norm: sga_trace.selected_grad_norm(),
                converged: true,
                condition_ratio: ratio_to(sga_trace.selected().as_slice()),
            },
        });
    }
    Ok(out)
}

/// Gap-versus-n sweep: per `(n, replicate)` the stationary proxy, GA at
/// `T = 50 n^2`, and SGA at `T = 10 n^4` are trained on a fresh sample and
/// their gaps measured on the fixed evaluation slots. Medians per cell are
/// fitted against `n^{-1/2}`.
pub fn sweep_gap_vs_n(cfg: &ExperimentConfig) -> Result<GapVsNReport, ExperimentError> {
    if cfg.kind != ExperimentKind::GapVsN {
        return Err(ExperimentError::InvalidParam(format!(
            "config kind is {}, expected gap_vs_n",
            cfg.kind
        )));
    }
    cfg.validate()
        .map_err(|e| ExperimentError::InvalidParam(e.to_string()))?;

    let outs: Result<Vec<Vec<GapTaskOut>>, ExperimentError> = (0..cfg.seeds)
        .into_par_iter()
        .map(|si| gap_vs_n_seed_task(cfg, si))
        .collect();
    let outs = outs?;

    let mut rows = Vec::new();
    for (pi, &n) in cfg.n_list.iter().enumerate() {
        for method in Method::ALL {
            let samples: Vec<GapSample> = (0..cfg.seeds)
                .map(|si| {
                    let out = &outs[si][pi];
                    match method {
                        Method::Stat => out.stat.clone(),
                        Method::Ga => out.ga.clone(),
                        Method::Sga => out.sga.clone(),
                    }
                })
                .collect();
            let gaps: Vec<f64> = samples.iter().map(|s| s.gap).collect();
            rows.push(GapVsNRow {
                n,
                method,
                median_gap: median(&gaps),
                iqr: quartiles(&gaps),
                samples,
            });
        }
    }

    let xs: Vec<f64> = cfg.n_list.iter().map(|&n| 1.0 / (n as f64).sqrt()).collect();
    let mut fits = Vec::new();
    let mut gamma_ss = Vec::new();
    for method in Method::ALL {
        let ys: Vec<f64> = rows
            .iter()
            .filter(|r| r.method == method)
            .map(|r| r.median_gap)
            .collect();
        fits.push(MethodFit {
            method,
            fit: fit_linear(&xs, &ys)?,
        });
        let gamma = rows
            .iter()
            .filter(|r| r.method == method)
            .flat_map(|r| r.samples.iter().map(|s| s.condition_ratio))
            .fold(0.0f64, f64::max);
        gamma_ss.push((method, gamma));
    }

    Ok(GapVsNReport {
        rows,
        fits,
        gamma_ss,
        provenance: Provenance::new(cfg.master_seed, cfg.canonical_text()),
    })
}

/// One `(n, method, T)` cell of the gap-versus-steps sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct GapVsTRow {
    pub n: usize,
    pub method: Method,
    pub t: u64,
    /// Gap of the min-gradient-norm iterate seen up to step `t`, per seed.
    pub gaps: Vec<f64>,
    pub median_gap: f64,
    pub iqr: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapVsTReport {
    pub checkpoints: Vec<u64>,
    pub rows: Vec<GapVsTRow>,
    pub provenance: Provenance,
}

impl GapVsTReport {
    /// `(t, median gap)` series for one method and sample size.
    pub fn median_series(&self, method: Method, n: usize) -> Vec<(u64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.method == method && r.n == n)
            .map(|r| (r.t, r.median_gap))
            .collect()
    }
}

/// Geometric checkpoint grid from `t_min` to `t_max` with `per_decade`
/// points per decade; always ends exactly at `t_max`.
pub fn geometric_checkpoints(t_min: u64, t_max: u64, per_decade: usize) -> Vec<u64> {
    assert!(t_min >= 1 && t_max >= t_min && per_decade >= 1);
    let mut out: Vec<u64> = Vec::new();
    let lmin = (t_min as f64).log10();
    let mut k = 0usize;
    loop {
        let v = 10f64.powf(lmin + k as f64 / per_decade as f64).round() as u64;
        if v > t_max {
            break;
        }
        if out.last() != Some(&v) {
            out.push(v);
        }
        k += 1;
    }
    if out.last() != Some(&t_max) {
        out.push(t_max);
    }
    out
}

struct GapTSeries {
    ga: Vec<f64>,
    sga: Vec<f64>,
}

/// One seed's runs across every `n`, sharing the pool and evaluation set.
fn gap_vs_t_seed_task(
    cfg: &ExperimentConfig,
    checkpoints: &[u64],
    si: usize,
) -> Result<Vec<GapTSeries>, ExperimentError> {
    let max_n = *cfg.n_list.iter().max().expect("validated nonempty");
    let run_seed = task_seed(cfg.master_seed, 0, cfg.seeds, si);
    let env = gen_env_rank_deficient(cfg.d, cfg.d_eff, cfg.test_set_size + max_n, run_seed)?;
    let test = Dataset::from_range(0, cfg.test_set_size, &env)?;
    let j_star = population_objective(&env, env.theta_star(), &test);
    let init = ParamVector::zeros(cfg.d, env.param_bound());

    let mut out = Vec::with_capacity(cfg.n_list.len());
    for &n in &cfg.n_list {
        let s = Dataset::from_range(cfg.test_set_size, n, &env)?;
        let mut ga_series = Vec::with_capacity(checkpoints.len());
        {
            let mut on_cp = |_step: u64, best: &[f64], _gn: f64| {
                ga_series.push((j_star - population_objective(&env, best, &test)).abs());
            };
            run_ga_checkpointed(&env, &s, &init, cfg.t_max, checkpoints, Some(&mut on_cp))?;
        }
        let mut sga_series = Vec::with_capacity(checkpoints.len());
        {
            let sga_seed = mix64(mix64(run_seed, role::OPTIMIZER), n as u64);
            let mut on_cp = |_step: u64, best: &[f64], _gn: f64| {
                sga_series.push((j_star - population_objective(&env, best, &test)).abs());
            };
            run_sga_checkpointed(
                &env,
                &s,
                &init,
                cfg.t_max,
                sga_seed,
                cfg.stride,
                checkpoints,
                Some(&mut on_cp),
            )?;
        }
        out.push(GapTSeries {
            ga: ga_series,
            sga: sga_series,
        });
    }
    Ok(out)
}

/// Gap-versus-steps sweep: GA and SGA run once per `(n, replicate)` up to
/// `t_max` steps; at each geometric checkpoint the gap of the best-so-far
/// iterate (minimum full-gradient norm) is recorded.
pub fn sweep_gap_vs_t(cfg: &ExperimentConfig) -> Result<GapVsTReport, ExperimentError> {
    if cfg.kind != ExperimentKind::GapVsT {
        return Err(ExperimentError::InvalidParam(format!(
            "config kind is {}, expected gap_vs_T",
            cfg.kind
        )));
    }
    cfg.validate()
        .map_err(|e| ExperimentError::InvalidParam(e.to_string()))?;
    let checkpoints = geometric_checkpoints(10, cfg.t_max, 8);

    let outs: Result<Vec<Vec<GapTSeries>>, ExperimentError> = (0..cfg.seeds)
        .into_par_iter()
        .map(|si| gap_vs_t_seed_task(cfg, &checkpoints, si))
        .collect();
    let outs = outs?;

    let mut rows = Vec::new();
    for (pi, &n) in cfg.n_list.iter().enumerate() {
        for method in [Method::Ga, Method::Sga] {
            for (ci, &t) in checkpoints.iter().enumerate() {
                let gaps: Vec<f64> = (0..cfg.seeds)
                    .map(|si| {
                        let out = &outs[si][pi];
                        match method {
                            Method::Ga => out.ga[ci],
                            _ => out.sga[ci],
                        }
                    })
                    .collect();
                rows.push(GapVsTRow {
                    n,
                    method,
                    t,
                    median_gap: median(&gaps),
                    iqr: quartiles(&gaps),
                    gaps,
                });
            }
        }
    }

    Ok(GapVsTReport {
        checkpoints,
        rows,
        provenance: Provenance::new(cfg.master_seed, cfg.canonical_text()),
    })
}

/// One coverage grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub p: f64,
    pub n: usize,
    pub prob_mc: f64,
    pub se: f64,
    /// Inclusion-exclusion value when `d` admits it.
    pub prob_exact: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub d: usize,
    pub rows: Vec<CoverageRow>,
    pub provenance: Provenance,
}

/// Coverage sweep over `(p, n)` grid points with `m_trials` Monte Carlo
/// trials each; exact values are attached when `d <= MAX_EXACT_DIM`.
pub fn sweep_coverage(cfg: &ExperimentConfig) -> Result<CoverageReport, ExperimentError> {
    if cfg.kind != ExperimentKind::Coverage {
        return Err(ExperimentError::InvalidParam(format!(
            "config kind is {}, expected coverage",
            cfg.kind
        )));
    }
    cfg.validate()
        .map_err(|e| ExperimentError::InvalidParam(e.to_string()))?;

    let points: Vec<(usize, usize)> = (0..cfg.p_list.len())
        .flat_map(|ppi| (0..cfg.n_list.len()).map(move |ni| (ppi, ni)))
        .collect();
    let rows: Result<Vec<CoverageRow>, ExperimentError> = points
        .par_iter()
        .enumerate()
        .map(|(point_idx, &(ppi, ni))| {
            let p = cfg.p_list[ppi];
            let n = cfg.n_list[ni];
            let (prob_mc, se) = mc_coverage_probability(
                cfg.d,
                p,
                n,
                cfg.m_trials,
                mix64(cfg.master_seed, point_idx as u64),
            )?;
            let prob_exact = if cfg.d <= MAX_EXACT_DIM {
                Some(exact_coverage_probability(cfg.d, p, n)?)
            } else {
                None
            };
            Ok(CoverageRow {
                p,
                n,
                prob_mc,
                se,
                prob_exact,
            })
        })
        .collect();

    Ok(CoverageReport {
        d: cfg.d,
        rows: rows?,
        provenance: Provenance::new(cfg.master_seed, cfg.canonical_text()),
    })
}

/// Pool partition shared by the rank-deficient sweeps: evaluation slots
/// first, then the training slots.
pub fn pooled_env_and_sets(
    cfg: &ExperimentConfig,
    n: usize,
    run_seed: u64,
) -> Result<(Environment, Dataset, Dataset), ExperimentError> {
    let env = gen_env_rank_deficient(cfg.d, cfg.d_eff, cfg.test_set_size + n, run_seed)?;
    let test = Dataset::from_range(0, cfg.test_set_size, &env)?;
    let s = Dataset::from_range(cfg.test_set_size, n, &env)?;
    Ok((env, test, s))
}
