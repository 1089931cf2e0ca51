//! Command implementations: self-checks, experiment sweeps, one-shot
//! decomposition, and environment dumps.

use crate::emit::{csv, fmt_f64, write_atomic, Manifest};
use rlhf_lab_core::checks::{run_checks, CheckOptions, Fault};
use rlhf_lab_core::config::{parse_config, ExperimentConfig, ExperimentKind};
use rlhf_lab_core::coverage::condition_ratio;
use rlhf_lab_core::experiments::{
    gen_env_orthonormal, pooled_env_and_sets, sweep_coverage, sweep_gap_vs_n, sweep_gap_vs_t,
    sweep_stability, ExperimentError,
};
use rlhf_lab_core::gradients::empirical_covariance;
use rlhf_lab_core::model::{decompose_suboptimality, suboptimality_gap, ParamVector};
use rlhf_lab_core::optim::{find_stationary_with, run_ga, run_sga, OptimizerKind, StationaryOptions};
use rlhf_lab_core::rng::{mix64, role};
use std::path::Path;

pub const SEED_ENV_VAR: &str = "RLHF_LAB_SEED";

#[derive(Debug)]
pub enum CliError {
    /// Usage or configuration problem; exit code 2.
    Config(String),
    /// A property check failed; exit code 1.
    CheckFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::CheckFailed(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "{msg}"),
            CliError::CheckFailed(n) => write!(f, "{n} property check(s) failed"),
        }
    }
}

fn io_err(context: &str, e: std::io::Error) -> CliError {
    CliError::Config(format!("{context}: {e}"))
}

fn env_var_seed() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV_VAR) {
        Ok(v) => v
            .trim()
            .parse::<u64>()
            .map(Some)
            .map_err(|_| CliError::Config(format!("{SEED_ENV_VAR}=`{v}` is not a valid u64 seed"))),
        Err(_) => Ok(None),
    }
}

/// Master-seed precedence: `--seed` flag, then an explicit `master_seed` key
/// in the config, then the `RLHF_LAB_SEED` environment variable, then 0.
fn resolve_seed(
    flag: Option<u64>,
    config_text: Option<&str>,
    cfg: Option<&mut ExperimentConfig>,
) -> Result<u64, CliError> {
    let explicit_in_config = config_text.is_some_and(|text| {
        text.lines().any(|line| {
            let stripped = line.split('#').next().unwrap_or("").trim_start();
            stripped
                .split('=')
                .next()
                .map(str::trim_end)
                .is_some_and(|k| k == "master_seed")
        })
    });
    let seed = if let Some(s) = flag {
        s
    } else if explicit_in_config {
        cfg.as_ref().map(|c| c.master_seed).unwrap_or(0)
    } else if let Some(s) = env_var_seed()? {
        s
    } else {
        cfg.as_ref().map(|c| c.master_seed).unwrap_or(0)
    };
    if let Some(c) = cfg {
        c.master_seed = seed;
    }
    Ok(seed)
}

fn load_config(
    path: &Path,
    seed_flag: Option<u64>,
    stride_flag: Option<u64>,
) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| io_err(&format!("cannot read config `{}`", path.display()), e))?;
    let mut cfg = parse_config(&text).map_err(|e| {
        CliError::Config(format!("config `{}`: {e}", path.display()))
    })?;
    resolve_seed(seed_flag, Some(&text), Some(&mut cfg))?;
    if stride_flag.is_some() {
        cfg.stride = stride_flag;
    }
    Ok(cfg)
}

fn experiment_error(e: ExperimentError) -> CliError {
    CliError::Config(e.to_string())
}

fn now_utc() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn write_manifest(
    out_dir: &Path,
    command: &str,
    cfg: &ExperimentConfig,
    jobs: Option<usize>,
    started: String,
) -> Result<(), CliError> {
    let echo = cfg.canonical_text();
    let manifest = Manifest {
        command: command.to_string(),
        master_seed: cfg.master_seed,
        jobs,
        config_echo: &echo,
        started_utc: started,
        finished_utc: now_utc(),
        exit_status: 0,
    };
    write_atomic(&out_dir.join("manifest.txt"), &manifest.render())
        .map_err(|e| io_err("cannot write manifest", e))
}

pub fn cmd_check(seed_flag: Option<u64>, fault: Option<&str>) -> Result<(), CliError> {
    let fault = match fault {
        None => None,
        Some("score-sign-flip") => Some(Fault::ScoreSignFlip),
        Some(other) => {
            return Err(CliError::Config(format!(
                "unknown fault `{other}` (known: score-sign-flip)"
            )))
        }
    };
    let seed = match seed_flag {
        Some(s) => s,
        None => env_var_seed()?.unwrap_or(0),
    };
    let results = run_checks(&CheckOptions { seed, fault });
    println!("rlhf-lab check (seed {seed})");
    let mut failed = 0usize;
    for r in &results {
        let tag = if r.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {:<44} {}", r.name, r.detail);
        if !r.pass {
            failed += 1;
        }
    }
    println!("result: {}/{} checks passed", results.len() - failed, results.len());
    if failed > 0 {
        return Err(CliError::CheckFailed(failed));
    }
    Ok(())
}

pub fn cmd_experiment(
    kind: ExperimentKind,
    config_path: &Path,
    out_dir: &Path,
    seed_flag: Option<u64>,
    stride_flag: Option<u64>,
    jobs: Option<usize>,
) -> Result<(), CliError> {
    let started = now_utc();
    let cfg = load_config(config_path, seed_flag, stride_flag)?;
    if cfg.kind != kind {
        return Err(CliError::Config(format!(
            "config kind `{}` does not match subcommand `{}`",
            cfg.kind, kind
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| io_err("cannot create output directory", e))?;

    match kind {
        ExperimentKind::Coverage => {
            let report = sweep_coverage(&cfg).map_err(experiment_error)?;
            let mut rows = Vec::new();
            let mut plot = Vec::new();
            for r in &report.rows {
                let exact = r
                    .prob_exact
                    .map(fmt_f64)
                    .unwrap_or_else(|| "NA".to_string());
                rows.push(vec![
                    fmt_f64(r.p),
                    r.n.to_string(),
                    fmt_f64(r.prob_mc),
                    fmt_f64(r.se),
                    exact,
                ]);
                let nc_exact = r
                    .prob_exact
                    .map(|p| fmt_f64(1.0 - p))
                    .unwrap_or_else(|| "NA".to_string());
                plot.push(vec![
                    fmt_f64(r.p),
                    r.n.to_string(),
                    fmt_f64(1.0 - r.prob_mc),
                    nc_exact,
                ]);
            }
            write_atomic(
                &out_dir.join("report.csv"),
                &csv(&["p", "n", "prob_mc", "se", "prob_exact_or_NA"], &rows),
            )
            .map_err(|e| io_err("cannot write report", e))?;
            write_atomic(
                &out_dir.join("plotdata_noncoverage.csv"),
                &csv(
                    &["p", "n", "noncoverage_mc", "noncoverage_exact_or_NA"],
                    &plot,
                ),
            )
            .map_err(|e| io_err("cannot write plotdata", e))?;
        }
        ExperimentKind::GapVsN => {
            let report = sweep_gap_vs_n(&cfg).map_err(experiment_error)?;
            let mut rows = Vec::new();
            let mut medians = Vec::new();
            for r in &report.rows {
                let inv = fmt_f64(1.0 / (r.n as f64).sqrt());
                for s in &r.samples {
                    rows.push(vec![
                        r.n.to_string(),
                        inv.clone(),
                        r.method.to_string(),
                        s.seed_index.to_string(),
                        fmt_f64(s.gap),
                        fmt_f64(s.grad_norm),
                        s.converged.to_string(),
                    ]);
                }
                medians.push(vec![
                    r.method.to_string(),
                    r.n.to_string(),
                    inv,
                    fmt_f64(r.median_gap),
                    fmt_f64(r.iqr.0),
                    fmt_f64(r.iqr.1),
                ]);
            }
            write_atomic(
                &out_dir.join("report.csv"),
                &csv(
                    &[
                        "n",
                        "inv_sqrt_n",
                        "method",
                        "seed",
                        "gap",
                        "grad_norm_achieved",
                        "converged",
                    ],
                    &rows,
                ),
            )
            .map_err(|e| io_err("cannot write report", e))?;
            write_atomic(
                &out_dir.join("plotdata_median.csv"),
                &csv(
                    &["method", "n", "inv_sqrt_n", "median_gap", "q1", "q3"],
                    &medians,
                ),
            )
            .map_err(|e| io_err("cannot write plotdata", e))?;
            let fits: Vec<Vec<String>> = report
                .fits
                .iter()
                .map(|f| {
                    vec![
                        f.method.to_string(),
                        fmt_f64(f.fit.slope),
                        fmt_f64(f.fit.intercept),
                        fmt_f64(f.fit.r),
                    ]
                })
                .collect();
            write_atomic(
                &out_dir.join("plotdata_fit.csv"),
                &csv(&["method", "slope", "intercept", "pearson_r"], &fits),
            )
            .map_err(|e| io_err("cannot write plotdata", e))?;
            // sampled maxima: lower bounds on the condition-ratio suprema
            let gammas: Vec<Vec<String>> = report
                .gamma_ss
                .iter()
                .map(|(m, g)| vec![m.to_string(), fmt_f64(*g)])
                .collect();
            write_atomic(
                &out_dir.join("plotdata_gamma.csv"),
                &csv(&["method", "gamma_ss_sampled_max"], &gammas),
            )
            .map_err(|e| io_err("cannot write plotdata", e))?;
        }
        ExperimentKind::GapVsT => {
            let report = sweep_gap_vs_t(&cfg).map_err(experiment_error)?;
            let mut rows = Vec::new();
            let mut medians = Vec::new();
            for r in &report.rows {
                for (seed, gap) in r.gaps.iter().enumerate() {
                    rows.push(vec![
                        r.t.to_string(),
                        r.method.to_string(),
                        r.n.to_string(),
                        seed.to_string(),
                        fmt_f64(*gap),
                    ]);
                }
                medians.push(vec![
                    r.method.to_string(),
                    r.n.to_string(),
                    r.t.to_string(),
                    fmt_f64((r.t as f64).log10()),
                    fmt_f64(r.median_gap),
                    fmt_f64(r.iqr.0),
                    fmt_f64(r.iqr.1),
                ]);
            }
            write_atomic(
                &out_dir.join("report.csv"),
                &csv(&["T", "method", "n", "seed", "gap"], &rows),
            )
            .map_err(|e| io_err("cannot write report", e))?;
            write_atomic(
                &out_dir.join("plotdata_median.csv"),
                &csv(
                    &["method", "n", "T", "log10_T", "median_gap", "q1", "q3"],
                    &medians,
                ),
            )
            .map_err(|e| io_err("cannot write plotdata", e))?;
        }
        ExperimentKind::Stability => {
            let report = sweep_stability(&cfg).map_err(experiment_error)?;
            let mut rows = Vec::new();
            let mut plot = Vec::new();
            for r in &report.rows {
                for (pair, value) in r.per_pair.iter().enumerate() {
                    rows.push(vec![
                        r.n.to_string(),
                        pair.to_string(),
                        fmt_f64(*value),
                    ]);
                }
                plot.push(vec![
                    r.n.to_string(),
                    fmt_f64(1.0 / (r.n as f64).sqrt()),
                    fmt_f64(r.estab_max),
                    fmt_f64(r.median),
                    fmt_f64(r.iqr.0),
                    fmt_f64(r.iqr.1),
                    fmt_f64(r.gamma_ss),
                    fmt_f64(r.gamma_ss_prime),
                ]);
            }
            write_atomic(
                &out_dir.join("report.csv"),
                &csv(&["n", "pair", "stability_value"], &rows),
            )
            .map_err(|e| io_err("cannot write report", e))?;
            write_atomic(
                &out_dir.join("plotdata_stability.csv"),
                &csv(
                    &[
                        "n",
                        "inv_sqrt_n",
                        "estab_max",
                        "median",
                        "q1",
                        "q3",
                        "gamma_ss_sampled_max",
                        "gamma_ss_prime_sampled_max",
                    ],
                    &plot,
                ),
            )
            .map_err(|e| io_err("cannot write plotdata", e))?;
            write_atomic(
                &out_dir.join("plotdata_fit.csv"),
                &csv(
                    &["slope", "intercept", "pearson_r"],
                    &[vec![
                        fmt_f64(report.fit.slope),
                        fmt_f64(report.fit.intercept),
                        fmt_f64(report.fit.r),
                    ]],
                ),
            )
            .map_err(|e| io_err("cannot write plotdata", e))?;
        }
    }

    write_manifest(
        out_dir,
        &format!("experiment {}", kind),
        &cfg,
        jobs,
        started,
    )?;
    println!("experiment {} complete; outputs in {}", kind, out_dir.display());
    Ok(())
}

/// One-shot suboptimality decomposition on a fresh rank-deficient instance:
/// trains with the configured optimizer, takes the stationary proxy, and
/// reports the three error terms alongside the measured gap.
pub fn cmd_decompose(
    config_path: &Path,
    out_dir: Option<&Path>,
    seed_flag: Option<u64>,
    jobs: Option<usize>,
) -> Result<(), CliError> {
    let started = now_utc();
    let cfg = load_config(config_path, seed_flag, None)?;
    if cfg.kind != ExperimentKind::GapVsN {
        return Err(CliError::Config(format!(
            "decompose expects a gap_vs_n-style config (got kind `{}`)",
            cfg.kind
        )));
    }
    let n = cfg.n_list[0];
    let run_seed = mix64(cfg.master_seed, 0xDEC0);
    let (env, test, s) = pooled_env_and_sets(&cfg, n, run_seed).map_err(experiment_error)?;

    let stat = find_stationary_with(
        &env,
        &s,
        StationaryOptions {
            tol: cfg.tol,
            ..StationaryOptions::default()
        },
    )
    .map_err(|e| CliError::Config(e.to_string()))?;

    let init = ParamVector::zeros(cfg.d, env.param_bound());
    let (t_steps, learned) = match cfg.optimizer {
        OptimizerKind::Ga => {
            let t = 50 * (n as u64) * (n as u64);
            (t, run_ga(&env, &s, &init, t)
                .map_err(|e| CliError::Config(e.to_string()))?
                .selected()
                .clone())
        }
        OptimizerKind::Sga => {
            let t = 10 * (n as u64).pow(4);
            let seed = mix64(run_seed, role::OPTIMIZER);
            (t, run_sga(&env, &s, &init, t, seed, cfg.stride)
                .map_err(|e| CliError::Config(e.to_string()))?
                .selected()
                .clone())
        }
    };

    let parts = decompose_suboptimality(&env, learned.as_slice(), stat.theta.as_slice(), &s, &test);
    let gap = suboptimality_gap(&env, learned.as_slice(), &test);
    let v_stat = empirical_covariance(&env, stat.theta.as_slice(), &s);
    let v_out = empirical_covariance(&env, learned.as_slice(), &s);
    let gamma = condition_ratio(&v_stat, &v_out).unwrap_or(f64::INFINITY);

    println!("decompose (kind=gap_vs_n, d={}, d_eff={}, n={n}, optimizer={}, T={t_steps})", cfg.d, cfg.d_eff, cfg.optimizer);
    println!("concentration={}", fmt_f64(parts.concentration));
    println!("optimization={}", fmt_f64(parts.optimization));
    println!("generalization={}", fmt_f64(parts.generalization));
    println!("sum={}", fmt_f64(parts.total()));
    println!("gap={}", fmt_f64(gap));
    println!("stationary_grad_norm={}", fmt_f64(stat.grad_norm));
    println!("stationary_converged={}", stat.converged);
    println!("condition_ratio_sampled={}", fmt_f64(gamma));

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| io_err("cannot create output directory", e))?;
        let rows = vec![
            vec!["concentration".into(), fmt_f64(parts.concentration)],
            vec!["optimization".into(), fmt_f64(parts.optimization)],
            vec!["generalization".into(), fmt_f64(parts.generalization)],
            vec!["sum".into(), fmt_f64(parts.total())],
            vec!["gap".into(), fmt_f64(gap)],
            vec!["stationary_grad_norm".into(), fmt_f64(stat.grad_norm)],
            vec![
                "stationary_converged".into(),
                stat.converged.to_string(),
            ],
            vec!["condition_ratio_sampled".into(), fmt_f64(gamma)],
        ];
        write_atomic(&dir.join("decompose.csv"), &csv(&["term", "value"], &rows))
            .map_err(|e| io_err("cannot write decompose.csv", e))?;
        write_manifest(dir, "decompose", &cfg, jobs, started)?;
    }
    Ok(())
}

/// Serializes the environment a config would generate: one CSV row per
/// `(context, action)` plus a metadata file with the bounds and ground-truth
/// parameter.
pub fn cmd_env_dump(
    config_path: &Path,
    out_dir: &Path,
    seed_flag: Option<u64>,
    jobs: Option<usize>,
) -> Result<(), CliError> {
    let started = now_utc();
    let cfg = load_config(config_path, seed_flag, None)?;
    let env = match cfg.kind {
        ExperimentKind::Coverage => {
            gen_env_orthonormal(cfg.d, cfg.p_list[0], mix64(cfg.master_seed, 0xE09))
                .map_err(experiment_error)?
        }
        _ => {
            let n = cfg.n_list[0];
            pooled_env_and_sets(&cfg, n, mix64(cfg.master_seed, 0xE09))
                .map_err(experiment_error)?
                .0
        }
    };
    std::fs::create_dir_all(out_dir).map_err(|e| io_err("cannot create output directory", e))?;

    let mut header: Vec<String> = vec![
        "context".into(),
        "action".into(),
        "weight".into(),
        "ref_prob".into(),
        "reward".into(),
    ];
    for i in 0..env.dim() {
        header.push(format!("phi_{i}"));
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut rows = Vec::new();
    for (x, ctx) in env.contexts().iter().enumerate() {
        for a in 0..ctx.n_actions() {
            let mut row = vec![
                x.to_string(),
                a.to_string(),
                fmt_f64(env.weights()[x]),
                fmt_f64(ctx.ref_probs()[a]),
                fmt_f64(ctx.reward(a)),
            ];
            row.extend(ctx.feature(a).iter().map(|v| fmt_f64(*v)));
            rows.push(row);
        }
    }
    write_atomic(&out_dir.join("env.csv"), &csv(&header_refs, &rows))
        .map_err(|e| io_err("cannot write env.csv", e))?;

    let mut meta = vec![
        vec!["dim".to_string(), env.dim().to_string()],
        vec!["n_contexts".to_string(), env.n_contexts().to_string()],
        vec!["feature_bound".to_string(), fmt_f64(env.feature_bound())],
        vec!["param_bound".to_string(), fmt_f64(env.param_bound())],
    ];
    for (i, v) in env.theta_star().iter().enumerate() {
        meta.push(vec![format!("theta_star_{i}"), fmt_f64(*v)]);
    }
    write_atomic(&out_dir.join("meta.csv"), &csv(&["key", "value"], &meta))
        .map_err(|e| io_err("cannot write meta.csv", e))?;
    write_manifest(out_dir, "env dump", &cfg, jobs, started)?;
    println!("environment dump written to {}", out_dir.display());
    Ok(())
}
