//! `symphony`: training, evaluation and verification runs from the command line.
//!
//! Exit status is 0 on success, 1 when arguments or manifests are invalid and
//! 2 when a run fails after it started; the failed run directory is kept.

mod commands;
mod config;
mod rundir;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use symphony_core::theory::NoiseKind;

use commands::{Ctx, OverheadArgs};

/// Optional cap on worker threads; the only environment variable read.
const THREAD_CAP_VAR: &str = "SYMPHONY_MAX_THREADS";

#[derive(Debug)]
pub enum Failure {
    Invalid(String),
    Runtime { reason: String, diagnostics: PathBuf },
}

#[derive(Debug, Parser)]
#[command(name = "symphony", version, about = "Symphony routing experiments for sparse mixture-of-experts layers")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Manifest (TOML) describing the run.
    #[arg(long, global = true, value_name = "PATH")]
    manifest: Option<PathBuf>,
    /// Parent directory for run directories [default: runs].
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Replaces the manifest seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads (benchmarks default to one).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// No progress messages on stderr.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a layer; writes the learning curve, adjacency snapshots and a checkpoint.
    Train,
    /// Clean validation and test metrics.
    Eval {
        /// Evaluate this checkpoint instead of training first.
        #[arg(long, value_name = "DIR")]
        checkpoint: Option<PathBuf>,
    },
    /// Test metrics over the manifest's contamination grid.
    AttackEval {
        #[arg(long, value_name = "DIR")]
        checkpoint: Option<PathBuf>,
        /// Overrides the manifest noise kind (uniform-ball, sphere-surface, adversarial).
        #[arg(long)]
        noise: Option<NoiseKind>,
        /// Train baseline and symphony on this many seeds and compare their degradation.
        #[arg(long, value_name = "COUNT")]
        compare_seeds: Option<usize>,
    },
    /// Monte Carlo check of the co-selection concentration bound.
    VerifyTheorem1,
    /// Contraction and TopK stability checks on a doubly stochastic adjacency.
    VerifyProp1 {
        /// Matrix or adjacency snapshot file [default: bundled 2x2 fixture].
        #[arg(long, value_name = "PATH")]
        adjacency: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Wall-time overhead of symphony routing over the baseline.
    Bench,
    /// Per-epoch adjacency matrices and spectra of a training run.
    DumpAdjacency {
        /// Directory of a finished train run; trains from --manifest otherwise.
        #[arg(long, value_name = "DIR")]
        run: Option<PathBuf>,
    },
    /// Memory and flop overhead of the social graph.
    EstimateOverhead {
        /// Layers.
        #[arg(long = "L")]
        layers: u64,
        /// Experts per layer.
        #[arg(long = "M")]
        experts: u64,
        /// Experts selected per token.
        #[arg(long = "K")]
        k: u64,
        /// Tokens per batch.
        #[arg(long = "N")]
        tokens: u64,
        #[arg(long, default_value_t = 4)]
        bytes_per_entry: u64,
    },
}

fn configure_threads(requested: Option<usize>, default: Option<usize>) -> Result<(), Failure> {
    let cap = match std::env::var(THREAD_CAP_VAR) {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| Failure::Invalid(format!("{THREAD_CAP_VAR} must be a positive integer, got '{v}'")))?,
        ),
        Err(_) => None,
    };
    if requested == Some(0) {
        return Err(Failure::Invalid("--threads must be at least 1".into()));
    }
    let n = match (requested.or(default), cap) {
        (Some(n), Some(c)) => n.min(c),
        (Some(n), None) => n,
        (None, Some(c)) => std::thread::available_parallelism().map_or(1, |p| p.get()).min(c),
        (None, None) => return Ok(()),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Invalid(format!("cannot configure {n} threads: {e}")))
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let c = cli.common;
    let bench_default = matches!(cli.command, Command::Bench).then_some(1);
    configure_threads(c.threads, bench_default)?;
    let ctx = Ctx { manifest: c.manifest, out: c.out, seed: c.seed, quiet: c.quiet };
    match cli.command {
        Command::Train => commands::cmd_train(&ctx),
        Command::Eval { checkpoint } => commands::cmd_eval(&ctx, checkpoint.as_deref()),
        Command::AttackEval { checkpoint, noise, compare_seeds } => {
            commands::cmd_attack_eval(&ctx, checkpoint.as_deref(), noise, compare_seeds)
        }
        Command::VerifyTheorem1 => commands::cmd_verify_theorem1(&ctx),
        Command::VerifyProp1 { adjacency, k, trials } => commands::cmd_verify_prop1(&ctx, adjacency.as_deref(), k, trials),
        Command::Bench => commands::cmd_bench(&ctx),
        Command::DumpAdjacency { run } => commands::cmd_dump_adjacency(&ctx, run.as_deref()),
        Command::EstimateOverhead { layers, experts, k, tokens, bytes_per_entry } => commands::cmd_estimate_overhead(
            &ctx,
            &OverheadArgs { layers, experts, k, tokens, bytes: bytes_per_entry },
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
            eprint!("{}", e.render());
            return ExitCode::from(1);
        }
        Err(e) => {
            let text = e.to_string();
            let reason = text.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("error: {reason}");
            return ExitCode::from(1);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(reason)) => {
            eprintln!("error: {}", reason.lines().next().unwrap_or_default());
            ExitCode::from(1)
        }
        Err(Failure::Runtime { reason, diagnostics }) => {
            eprintln!("error: {reason}");
            eprintln!("diagnostics: {}", diagnostics.display());
            ExitCode::from(2)
        }
    }
}
