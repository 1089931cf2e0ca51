//! Acceptance suite: one test per acceptance criterion, each printing a
//! single `[criterion NN] PASS/FAIL` line (run with `-- --show-output` to
//! see the lines for passing tests).
//!
//! Every tolerance and threshold is pinned here. The suite is deterministic:
//! all randomness derives from the fixed `SUITE_SEED`.

use rayon::prelude::*;
use rlhf_lab_core::config::parse_config;
use rlhf_lab_core::coverage::{
    column_space_invariance_gap, cp_matrix_properties, span_union_dim,
};
use rlhf_lab_core::experiments::{
    exact_coverage_probability, gen_env_orthonormal, gen_env_random, gen_env_rank_deficient,
    mc_coverage_probability, sweep_gap_vs_n, sweep_gap_vs_t, sweep_stability, Method,
};
use rlhf_lab_core::gradients::{
    default_fd_step, finite_difference_gradient, gradient_closed_form, gradient_score_function,
    smoothness_constant, CovarianceStat,
};
use rlhf_lab_core::linalg::{norm2, sub, SymMat};
use rlhf_lab_core::model::{
    empirical_objective, policy_probs, total_variation, Dataset, Environment, ParamVector,
};
use rlhf_lab_core::optim::{
    find_stationary_with, run_ga, run_sga, StationaryOptions,
};
use rlhf_lab_core::rng::{mix64, stream_rng};
use rand::Rng;
use std::time::Instant;

const SUITE_SEED: u64 = 0;

fn criterion(id: u32, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("[criterion {id:02}] {tag} — {detail}");
    assert!(pass, "criterion {id:02} failed: {detail}");
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

/// Criterion 1: three-way gradient oracle agreement on 100 random instances
/// (closed form vs score function to 1e-10 relative, either vs central
/// finite differences to 1e-5 relative) in under five seconds.
#[test]
fn c01_gradient_oracle_agreement() {
    let start = Instant::now();
    let mut rng = stream_rng(SUITE_SEED, 101);
    let mut worst_score = 0.0f64;
    let mut worst_fd = 0.0f64;
    for _ in 0..100 {
        let env = gen_env_random(&mut rng);
        let n = rng.random_range(1..=8);
        let s = Dataset::sample_iid(&env, n, &mut rng);
        let theta = theta_in_ball(env.dim(), env.radius(), &mut rng);
        let a = gradient_closed_form(&env, &theta, &s);
        let b = gradient_score_function(&env, &theta, &s);
        let fd = finite_difference_gradient(&env, &theta, &s, default_fd_step(&theta));
        worst_score = worst_score.max(norm2(&sub(&a, &b)) / norm2(&a).max(1e-12));
        worst_fd = worst_fd.max(norm2(&sub(&a, &fd)) / norm2(&a).max(norm2(&fd)).max(1e-6));
    }
    let secs = start.elapsed().as_secs_f64();
    criterion(
        1,
        worst_score <= 1e-10 && worst_fd <= 1e-5 && secs < 5.0,
        &format!(
            "closed-vs-score rel {worst_score:.2e} (<=1e-10), vs-FD rel {worst_fd:.2e} (<=1e-5), {secs:.2}s (<5s)"
        ),
    );
}

/// Criteria 2 and 3 share a matrix of optimizer runs: the gradient-norm
/// bound `min_t ||grad||^2 <= 12 L_f R C / T + 1e-9` must hold on every GA
/// run, and every recorded iterate of every run must stay in the 3D ball.
#[test]
fn c02_c03_ga_bound_and_bounded_iterates() {
    let mut rng = stream_rng(SUITE_SEED, 102);
    let mut bound_violations = 0usize;
    let mut worst_slack = f64::NEG_INFINITY;
    let mut worst_ball_excess = f64::NEG_INFINITY;
    let mut ga_runs = 0usize;
    for run in 0..70 {
        let env = gen_env_random(&mut rng);
        let n = rng.random_range(1..=8);
        let s = Dataset::sample_iid(&env, n, &mut rng);
        let init = ParamVector::zeros(env.dim(), env.param_bound());
        let t = rng.random_range(20..=2000u64);
        let trace = if run % 4 == 3 {
            run_sga(&env, &s, &init, t, mix64(SUITE_SEED, run), Some(7)).unwrap()
        } else {
            ga_runs += 1;
            let trace = run_ga(&env, &s, &init, t).unwrap();
            let lf = smoothness_constant(env.radius(), env.feature_bound());
            let bound = 12.0 * lf * env.radius() * env.feature_bound() / t as f64 + 1e-9;
            let min_sq = trace.selected_grad_norm().powi(2);
            worst_slack = worst_slack.max(min_sq - bound);
            if min_sq > bound {
                bound_violations += 1;
            }
            trace
        };
        for it in &trace.iterates {
            worst_ball_excess = worst_ball_excess.max(it.norm() - (env.radius() + 1e-10));
        }
    }
    criterion(
        2,
        ga_runs >= 50 && bound_violations == 0,
        &format!("{ga_runs} GA runs, {bound_violations} bound violations (worst slack {worst_slack:.2e})"),
    );
    criterion(
        3,
        worst_ball_excess <= 0.0,
        &format!("max iterate-norm excess over 3D+1e-10: {worst_ball_excess:.2e}"),
    );
}

/// Criterion 4: ten random starts on ten rank-deficient instances all reach
/// stationary points with empirical objectives equal to 1e-6 and
/// training-context policies equal to total variation 1e-4.
#[test]
fn c04_stationary_value_uniqueness() {
    let mut rng = stream_rng(SUITE_SEED, 104);
    let mut worst_spread = 0.0f64;
    let mut worst_tv = 0.0f64;
    let mut all_converged = true;
    for inst in 0..10u64 {
        // rank-deficient relative to the ambient space (d_eff = 6 < d = 16),
        // with the effective subspace richly sampled so the positive part of
        // the covariance spectrum stays well away from the rank threshold
        let env = gen_env_rank_deficient(16, 6, 60, mix64(SUITE_SEED, 1040 + inst)).unwrap();
        let s = Dataset::from_range(0, 20, &env).unwrap();
        let mut thetas = Vec::new();
        for _ in 0..10 {
            let anchor = theta_in_ball(16, env.param_bound(), &mut rng);
            let res = find_stationary_with(
                &env,
                &s,
                StationaryOptions {
                    tol: 1e-8,
                    t_max: 2_000_000,
                    anchor: Some(anchor),
                    warm_start: false,
                },
            )
            .unwrap();
            all_converged &= res.converged;
            thetas.push(res.theta);
        }
        let values: Vec<f64> = thetas
            .iter()
            .map(|t| empirical_objective(&env, t.as_slice(), &s))
            .collect();
        let spread = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - values.iter().cloned().fold(f64::INFINITY, f64::min);
        worst_spread = worst_spread.max(spread);
        for i in 0..thetas.len() {
            for j in (i + 1)..thetas.len() {
                for &x in s.indices() {
                    let pi = policy_probs(&env, thetas[i].as_slice(), x).unwrap();
                    let pj = policy_probs(&env, thetas[j].as_slice(), x).unwrap();
                    worst_tv = worst_tv.max(total_variation(&pi, &pj));
                }
            }
        }
    }
    criterion(
        4,
        all_converged && worst_spread <= 1e-6 && worst_tv <= 1e-4,
        &format!("J_S spread {worst_spread:.2e} (<=1e-6), policy TV {worst_tv:.2e} (<=1e-4), converged={all_converged}"),
    );
}

/// Criterion 5: projector Frobenius gap of the empirical covariance column
/// space over random parameter pairs, on environments with per-context
/// linearly independent features.
#[test]
fn c05_column_space_invariance() {
    let mut rng = stream_rng(SUITE_SEED, 105);
    let mut worst = 0.0f64;
    for e in 0..10u64 {
        let (env, s) = if e % 2 == 0 {
            let env = gen_env_orthonormal(8, 0.05, mix64(SUITE_SEED, 1050 + e)).unwrap();
            let s = Dataset::sample_iid(&env, 20, &mut rng);
            (env, s)
        } else {
            let env = gen_env_rank_deficient(12, 8, 40, mix64(SUITE_SEED, 1050 + e)).unwrap();
            let s = Dataset::from_range(0, 6, &env).unwrap();
            (env, s)
        };
        for _ in 0..10 {
            let t1 = theta_in_ball(env.dim(), env.radius(), &mut rng);
            let t2 = theta_in_ball(env.dim(), env.radius(), &mut rng);
            worst = worst.max(column_space_invariance_gap(&env, &s, &t1, &t2));
        }
    }
    criterion(
        5,
        worst <= 1e-8,
        &format!("max projector Frobenius gap {worst:.2e} (<=1e-8)"),
    );
}

/// Criterion 6: parameter recovery under full coverage. 200 trials at d=20;
/// conditioned on every basis direction being sampled, the stationary proxy
/// must land within 1e-4 of the ground truth in at least 99% of trials,
/// within a two-minute budget.
#[test]
fn c06_recovery_under_coverage() {
    let start = Instant::now();
    let d = 20;
    let p = 0.02;
    let n = 500;
    let results: Vec<Option<f64>> = (0..200u64)
        .into_par_iter()
        .map(|trial| {
            let env = gen_env_orthonormal(d, p, mix64(SUITE_SEED, 1060 + trial)).unwrap();
            let mut rng = stream_rng(mix64(SUITE_SEED, 1060 + trial), 7);
            let s = Dataset::sample_iid(&env, n, &mut rng);
            let mut mask = 0u32;
            for &x in s.indices() {
                mask |= 1 << x;
            }
            if mask != (1u32 << d) - 1 {
                return None; // not covered; excluded by conditioning
            }
            let res = find_stationary_with(
                &env,
                &s,
                StationaryOptions {
                    tol: 1e-8,
                    t_max: 4_000_000,
                    anchor: None,
                    warm_start: false,
                },
            )
            .unwrap();
            Some(norm2(&sub(res.theta.as_slice(), env.theta_star())))
        })
        .collect();
    let covered: Vec<f64> = results.iter().flatten().copied().collect();
    let recovered = covered.iter().filter(|&&e| e <= 1e-4).count();
    let frac = recovered as f64 / covered.len() as f64;
    let secs = start.elapsed().as_secs_f64();
    criterion(
        6,
        covered.len() >= 150 && frac >= 0.99 && secs < 120.0,
        &format!(
            "{recovered}/{} covered trials recovered to 1e-4 ({:.1}%), {secs:.1}s (<120s)",
            covered.len(),
            100.0 * frac
        ),
    );
}

/// Criterion 7: Monte Carlo coverage probability (m = 10,000) within three
/// exact standard errors of the inclusion-exclusion oracle on a
/// (d, n, p) grid, with the non-coverage fraction nonincreasing in n and
/// nondecreasing as p shrinks at every tested grid point.
#[test]
fn c07_coverage_probability_shape() {
    let ds = [2usize, 3, 4, 6, 8];
    let ns = [1usize, 2, 4, 8, 12, 16, 24, 32, 40];
    let ps = [0.02, 0.1];
    let m = 10_000;
    let mut worst_z = 0.0f64;
    let mut shape_ok = true;
    let mut grid: Vec<Vec<Vec<f64>>> = Vec::new(); // [d][p][n] -> noncoverage
    for (di, &d) in ds.iter().enumerate() {
        grid.push(vec![Vec::new(), Vec::new()]);
        for (pi, &p) in ps.iter().enumerate() {
            for (ni, &n) in ns.iter().enumerate() {
                let exact = exact_coverage_probability(d, p, n).unwrap();
                let seed = mix64(SUITE_SEED, 1070 + (di * 100 + pi * 10 + ni) as u64);
                let (mc, _) = mc_coverage_probability(d, p, n, m, seed).unwrap();
                let se = (exact * (1.0 - exact) / m as f64).sqrt();
                if se == 0.0 {
                    shape_ok &= mc == exact;
                } else {
                    worst_z = worst_z.max((mc - exact).abs() / se);
                }
                grid[di][pi].push(1.0 - mc);
            }
        }
    }
    // non-coverage nonincreasing in n at every (d, p)
    for row in grid.iter().flatten() {
        for w in row.windows(2) {
            shape_ok &= w[1] <= w[0] + 1e-12;
        }
    }
    // non-coverage at the smaller p dominates at every (d, n)
    for d_rows in &grid {
        for (a, b) in d_rows[0].iter().zip(d_rows[1].iter()) {
            shape_ok &= a >= b;
        }
    }
    criterion(
        7,
        worst_z <= 3.0 && shape_ok,
        &format!("max |z| = {worst_z:.2} (<=3), monotone shape ok = {shape_ok}"),
    );
}

/// Criterion 8: gap-versus-n sweeps at (d=32, d_eff=24) and
/// (d=38, d_eff=32), n = 7..22, 20 seeds, T_GA = 50 n^2, T_SGA = 10 n^4;
/// Pearson r of median gap against n^{-1/2} at least 0.95 for each method.
#[test]
fn c08_gap_vs_n_shape() {
    let configs = [
        ("d=32,d_eff=24", "kind=gap_vs_n\nd=32\nd_eff=24\nn_range=7..22\nseeds=20\nmaster_seed=0"),
        ("d=38,d_eff=32", "kind=gap_vs_n\nd=38\nd_eff=32\nn_range=7..22\nseeds=20\nmaster_seed=0"),
    ];
    let mut all_pass = true;
    let mut details = Vec::new();
    for (label, text) in configs {
        let cfg = parse_config(text).unwrap();
        let report = sweep_gap_vs_n(&cfg).unwrap();
        for method in Method::ALL {
            let r = report.fit_for(method).unwrap().r;
            let ok = r >= 0.95;
            all_pass &= ok;
            details.push(format!("{label} {method}: r={r:.4}{}", if ok { "" } else { " <0.95" }));
        }
    }
    criterion(8, all_pass, &details.join("; "));
}

/// Criterion 9: gap versus steps at d=18, d_eff=14, n in {7, 10}, T up to
/// 1e7 on geometric checkpoints; per method the decade medians are
/// nonincreasing (allowing one decade-to-decade increase of at most 10%
/// before the floor) and the n=10 floor lies strictly below the n=7 floor.
#[test]
fn c09_gap_vs_t_shape() {
    let cfg = parse_config(
        "kind=gap_vs_T\nd=18\nd_eff=14\nn_list=7,10\nt_max=1e7\nseeds=20\nmaster_seed=0",
    )
    .unwrap();
    let report = sweep_gap_vs_t(&cfg).unwrap();
    let mut pass = true;
    let mut details = Vec::new();
    for method in [Method::Ga, Method::Sga] {
        let mut floors = Vec::new();
        for n in [7usize, 10] {
            let series = report.median_series(method, n);
            // decade summary: median of the per-checkpoint medians in the decade
            let mut by_decade: Vec<Vec<f64>> = vec![Vec::new(); 8];
            for (t, g) in &series {
                by_decade[(*t as f64).log10().floor() as usize].push(*g);
            }
            let decs: Vec<f64> = by_decade
                .iter()
                .filter(|v| !v.is_empty())
                .map(|v| rlhf_lab_core::linalg::median(v))
                .collect();
            let mut increases = 0usize;
            let mut worst_increase = 0.0f64;
            for w in decs.windows(2) {
                if w[1] > w[0] {
                    increases += 1;
                    worst_increase = worst_increase.max((w[1] - w[0]) / w[0]);
                }
            }
            pass &= increases <= 1 && worst_increase <= 0.10;
            floors.push(*decs.last().unwrap());
            details.push(format!(
                "{method} n={n}: decades {} ({increases} increase(s), worst {worst_increase:.1}%)",
                decs.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>().join(">")
            ));
        }
        let ordered = floors[1] < floors[0];
        pass &= ordered;
        details.push(format!(
            "{method} floors: n=7 {:.3e} vs n=10 {:.3e} ({})",
            floors[0],
            floors[1],
            if ordered { "ordered" } else { "NOT ordered" }
        ));
    }
    criterion(9, pass, &details.join("; "));
}

/// Criterion 10: empirical uniform stability over n in {8,12,16,24,32} with
/// 20 neighbor pairs each: the per-n maxima correlate with n^{-1/2} at
/// 0.9 or better and the per-n medians are monotone nonincreasing.
#[test]
fn c10_stability_rate() {
    let cfg = parse_config("kind=stability\nmaster_seed=0").unwrap();
    assert_eq!(cfg.n_list, vec![8, 12, 16, 24, 32]);
    assert_eq!(cfg.seeds, 20);
    let report = sweep_stability(&cfg).unwrap();
    let meds: Vec<f64> = report.rows.iter().map(|r| r.median).collect();
    let mono = meds.windows(2).all(|w| w[1] <= w[0] + 1e-15);
    let r = report.fit.r;
    criterion(
        10,
        r >= 0.9 && mono,
        &format!(
            "corr(estab_max, n^-1/2) = {r:.3} (>=0.9), medians {} ({})",
            meds.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>().join(">"),
            if mono { "monotone" } else { "NOT monotone" }
        ),
    );
}

/// Criterion 11: algebra suite. `C_p = diag(p) - p p^T` has rank |p|-1 with
/// the all-ones vector spanning its null space on 50 random simplex points,
/// and `rank(A+B) = dim(C(A)+C(B))` for 50 random PSD pairs.
#[test]
fn c11_algebra_suite() {
    let mut rng = stream_rng(SUITE_SEED, 111);
    let mut cp_ok = true;
    for _ in 0..50 {
        let k = rng.random_range(1..=10usize);
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|v| v / sum).collect();
        let rep = cp_matrix_properties(&p).unwrap();
        cp_ok &= rep.rank == k - 1 && rep.nullspace_check;
    }
    let mut add_ok = true;
    for _ in 0..50 {
        let d = rng.random_range(2..=8usize);
        let mut make_psd = |rng: &mut rand_chacha::ChaCha8Rng| {
            let rank = rng.random_range(0..=d);
            let mut m = SymMat::zeros(d);
            for _ in 0..rank {
                let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                m.add_scaled_outer(rng.random_range(0.1..2.0), &v);
            }
            CovarianceStat::from_matrix(m)
        };
        let a = make_psd(&mut rng);
        let b = make_psd(&mut rng);
        let mut sum = a.matrix().clone();
        sum.add_scaled(1.0, b.matrix());
        let sum_rank = CovarianceStat::from_matrix(sum).rank();
        add_ok &= sum_rank == span_union_dim(&a, &b);
    }
    criterion(
        11,
        cp_ok && add_ok,
        &format!("C_p rank/null ok = {cp_ok}, column-space additivity ok = {add_ok}"),
    );
}

/// Criterion 12: byte-identical CSV outputs when a command is repeated with
/// the same seed and --jobs value (and, stronger, across different --jobs).
#[test]
fn c12_byte_identical_outputs() {
    let bin = env!("CARGO_BIN_EXE_rlhf-lab");
    let base = std::env::temp_dir().join(format!("rlhf_lab_acceptance_{}", std::process::id()));
    std::fs::create_dir_all(&base).unwrap();
    let cov_cfg = base.join("cov.cfg");
    std::fs::write(&cov_cfg, "kind=coverage\nd=6\np_list=0.05,0.2\nn_list=4,8,16\nm_trials=2000\n").unwrap();
    let gap_cfg = base.join("gap.cfg");
    std::fs::write(
        &gap_cfg,
        "kind=gap_vs_n\nd=10\nd_eff=6\nn_list=3,5\nseeds=3\ntest_set_size=1000\n",
    )
    .unwrap();

    let run = |kind: &str, cfg: &std::path::Path, out: &std::path::Path, jobs: &str| {
        let status = std::process::Command::new(bin)
            .args([
                "experiment",
                kind,
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--seed",
                "7",
                "--jobs",
                jobs,
            ])
            .stdout(std::process::Stdio::null())
            .status()
            .unwrap();
        assert!(status.success());
    };

    let mut pass = true;
    let mut details = Vec::new();
    for (kind, cfg, files) in [
        ("coverage", &cov_cfg, vec!["report.csv", "plotdata_noncoverage.csv"]),
        (
            "gap-n",
            &gap_cfg,
            vec!["report.csv", "plotdata_median.csv", "plotdata_fit.csv", "plotdata_gamma.csv"],
        ),
    ] {
        let out1 = base.join(format!("{kind}_a"));
        let out2 = base.join(format!("{kind}_b"));
        let out3 = base.join(format!("{kind}_c"));
        run(kind, cfg, &out1, "2");
        run(kind, cfg, &out2, "2");
        run(kind, cfg, &out3, "1");
        for f in files {
            let a = std::fs::read(out1.join(f)).unwrap();
            let b = std::fs::read(out2.join(f)).unwrap();
            let c = std::fs::read(out3.join(f)).unwrap();
            let same_jobs = a == b;
            let cross_jobs = a == c;
            pass &= same_jobs && cross_jobs;
            if !same_jobs || !cross_jobs {
                details.push(format!("{kind}/{f}: same-jobs={same_jobs} cross-jobs={cross_jobs}"));
            }
        }
    }
    if details.is_empty() {
        details.push("coverage and gap-n outputs byte-identical across repeats and --jobs".into());
    }
    let _ = std::fs::remove_dir_all(&base);
    criterion(12, pass, &details.join("; "));
}
