//! `rlhf-lab`: property checks, scaling experiments, and inspection tools
//! for the KL-regularized policy optimization laboratory.
//!
//! Exit codes: 0 on success, 1 when a property check fails, 2 on usage or
//! configuration errors.

mod commands;
mod emit;

use clap::{Args, Parser, Subcommand};
use commands::CliError;
use rlhf_lab_core::config::ExperimentKind;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "rlhf-lab", version, about = "KL-regularized policy optimization laboratory")]
struct Cli {
    /// Master seed override (falls back to the config file, then RLHF_LAB_SEED)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread count (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the deterministic property suite and print a pass/fail table
    Check {
        /// Inject a known defect to verify the suite catches it
        #[arg(long, hide = true, value_name = "FAULT")]
        inject_fault: Option<String>,
    },
    /// Run an experiment sweep from a config file
    Experiment {
        #[command(subcommand)]
        kind: ExperimentCmd,
    },
    /// One-shot suboptimality decomposition on a fresh instance
    Decompose {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Environment inspection
    Env {
        #[command(subcommand)]
        cmd: EnvCmd,
    },
}

#[derive(Args)]
struct ExpArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// SGA full-gradient evaluation stride (1 = evaluate every step)
    #[arg(long)]
    stride: Option<u64>,
}

#[derive(Subcommand)]
enum ExperimentCmd {
    /// Coverage probability of the orthonormal-basis sampler
    Coverage(ExpArgs),
    /// Suboptimality gap against sample size
    #[command(name = "gap-n")]
    GapN(ExpArgs),
    /// Suboptimality gap against optimization steps
    #[command(name = "gap-T")]
    GapT(ExpArgs),
    /// Uniform-stability estimate against sample size
    Stability(ExpArgs),
}

#[derive(Subcommand)]
enum EnvCmd {
    /// Serialize the environment a config would generate to CSV
    Dump {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot configure thread pool: {e}")))?;
    }
    match cli.command {
        Command::Check { inject_fault } => commands::cmd_check(cli.seed, inject_fault.as_deref()),
        Command::Experiment { kind } => {
            let (kind, args) = match kind {
                ExperimentCmd::Coverage(a) => (ExperimentKind::Coverage, a),
                ExperimentCmd::GapN(a) => (ExperimentKind::GapVsN, a),
                ExperimentCmd::GapT(a) => (ExperimentKind::GapVsT, a),
                ExperimentCmd::Stability(a) => (ExperimentKind::Stability, a),
            };
            commands::cmd_experiment(kind, &args.config, &args.out, cli.seed, args.stride, cli.jobs)
        }
        Command::Decompose { config, out } => {
            commands::cmd_decompose(&config, out.as_deref(), cli.seed, cli.jobs)
        }
        Command::Env { cmd } => match cmd {
            EnvCmd::Dump { config, out } => {
                commands::cmd_env_dump(&config, &out, cli.seed, cli.jobs)
            }
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
