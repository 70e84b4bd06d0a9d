//! `dfpo` — train, evaluate, and diagnose differential-policy-optimization
//! runs. Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or
//! usage, 3 corrupt checkpoint, 4 diagnostic threshold violation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dfpo_cli::commands::{cmd_diagnose, cmd_eval, cmd_train, DiagnoseArgs, DiagnoseMode};
use dfpo_cli::CmdError;
use dfpo_core::parallel::set_thread_cap;

#[derive(Parser)]
#[command(
    name = "dfpo",
    version,
    about = "Differential policy optimization: stage-wise training of Hamiltonian dynamics operators",
    after_help = "Environment: DFPO_THREADS caps rollout parallelism (0 = auto)."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train per a run-configuration file; writes per-stage and final
    /// checkpoints plus training-history CSVs.
    Train {
        /// Run-configuration file (flat `section.key = value` lines).
        #[arg(long)]
        config: PathBuf,
        /// Override the config's run seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint over fresh test episodes; prints mean ± std
    /// terminal cost and writes the per-episode CSV.
    Eval {
        /// Checkpoint to evaluate.
        #[arg(long)]
        ckpt: PathBuf,
        /// Number of test episodes.
        #[arg(long, default_value_t = 200)]
        episodes: usize,
        /// Evaluation seed (defaults to the seed recorded in the checkpoint).
        #[arg(long)]
        seed: Option<u64>,
        /// Report CSV path (defaults to the checkpoint path with extension
        /// `eval.csv`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a diagnostic suite; exits 0 iff every threshold is met.
    Diagnose {
        #[arg(long, value_enum)]
        mode: Mode,
        /// Trained checkpoint (required by `pointwise`).
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// Quadratic run config (required by `regret`).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Diagnostic seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Optional CSV output (regret curve).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    /// Reverse-mode gradients vs finite differences on random networks.
    Gradcheck,
    /// Harmonic-oscillator operator and flow-consistency checks.
    Oracle,
    /// One-step operator error of a trained quadratic checkpoint.
    Pointwise,
    /// Train on a quadratic config and fit the cumulative-regret exponent.
    Regret,
}

impl From<Mode> for DiagnoseMode {
    fn from(mode: Mode) -> Self {
        match mode {
            Mode::Gradcheck => DiagnoseMode::Gradcheck,
            Mode::Oracle => DiagnoseMode::Oracle,
            Mode::Pointwise => DiagnoseMode::Pointwise,
            Mode::Regret => DiagnoseMode::Regret,
        }
    }
}

fn apply_thread_cap() -> Result<(), CmdError> {
    match std::env::var("DFPO_THREADS") {
        Ok(value) => {
            let n: usize = value.trim().parse().map_err(|_| {
                CmdError::Usage(format!("DFPO_THREADS must be a nonnegative integer, got `{value}`"))
            })?;
            set_thread_cap(n);
            Ok(())
        }
        Err(std::env::VarError::NotPresent) => Ok(()),
        Err(std::env::VarError::NotUnicode(_)) => {
            Err(CmdError::Usage("DFPO_THREADS is not valid unicode".into()))
        }
    }
}

fn run(cli: Cli) -> Result<(), CmdError> {
    apply_thread_cap()?;
    match cli.command {
        Command::Train { config, seed, out } => cmd_train(&config, seed, out),
        Command::Eval { ckpt, episodes, seed, out } => cmd_eval(&ckpt, episodes, seed, out),
        Command::Diagnose { mode, ckpt, config, seed, out } => {
            cmd_diagnose(mode.into(), DiagnoseArgs { ckpt, config, seed, out })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(error.exit_code())
        }
    }
}
