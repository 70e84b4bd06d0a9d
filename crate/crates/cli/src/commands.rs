//! Bodies of the `train`, `eval`, and `diagnose` subcommands. Each returns
//! `Result<(), CmdError>`; the binary maps errors to process exit codes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dfpo_core::dynamics::{AnalyticHamiltonian, DynamicsOperator};
use dfpo_core::envs::EnvKind;
use dfpo_core::eval::{
    eval_terminal, export_regret_csv, export_report_csv, pointwise_error, regret_estimate,
    EvalError,
};
use dfpo_core::net::{Activation, NetError, ScoreNet};
use dfpo_core::phase::PhasePoint;
use dfpo_core::rng::stream;
use dfpo_core::trainer::{train, train_with, TrainError, TrainHistory};
use log::info;
use rand::Rng;

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CkptError};
use crate::config::{ConfigError, RunConfig};
use crate::CmdError;

/// Network-gradient acceptance threshold for `diagnose gradcheck`.
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;
/// Rollout-vs-matrix-power tolerance for `diagnose oracle`.
pub const ORACLE_TOLERANCE: f64 = 1e-12;
/// Minimum per-halving error-reduction factor for a first-order step.
pub const ORACLE_HALVING_FACTOR: f64 = 3.9;
/// One-step operator-error threshold for `diagnose pointwise`.
pub const POINTWISE_TOLERANCE: f64 = 0.05;
/// Cumulative-regret growth must stay sublinear in `diagnose regret`.
pub const REGRET_EXPONENT_LIMIT: f64 = 1.0;

fn usage_err(e: ConfigError) -> CmdError {
    CmdError::Usage(e.to_string())
}

fn train_err(e: TrainError) -> CmdError {
    match e {
        TrainError::Config(m) => CmdError::Usage(m),
        other => CmdError::Runtime(other.to_string()),
    }
}

fn eval_err(e: EvalError) -> CmdError {
    match e {
        EvalError::Unsupported(m) => CmdError::Usage(m),
        other => CmdError::Runtime(other.to_string()),
    }
}

fn net_err(e: NetError) -> CmdError {
    CmdError::Runtime(e.to_string())
}

/// Missing files are usage mistakes; unreadable contents are corruption.
fn ckpt_err(e: CkptError) -> CmdError {
    if e.is_not_found() {
        return CmdError::Usage(e.to_string());
    }
    match e {
        CkptError::Io { .. } => CmdError::Runtime(e.to_string()),
        _ => CmdError::Corrupt(e.to_string()),
    }
}

fn read_config(path: &Path) -> Result<RunConfig, CmdError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CmdError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    RunConfig::parse(&text).map_err(usage_err)
}

/// Parse the config embedded in a checkpoint header and rebuild the network.
fn open_checkpoint(path: &Path) -> Result<(Checkpoint, RunConfig, ScoreNet), CmdError> {
    let ckpt = load_checkpoint(path).map_err(ckpt_err)?;
    let config = RunConfig::parse(&ckpt.config_text)
        .map_err(|e| CmdError::Corrupt(format!("checkpoint header does not parse: {e}")))?;
    let net = ckpt.rebuild_net().map_err(ckpt_err)?;
    Ok((ckpt, config, net))
}

fn write_file(path: &Path, text: &str) -> Result<(), CmdError> {
    std::fs::write(path, text)
        .map_err(|e| CmdError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Train per the config file, writing a checkpoint after every stage, a final
/// checkpoint, and the training-history CSVs into the output directory.
pub fn cmd_train(
    config_path: &Path,
    seed_override: Option<u64>,
    out_override: Option<PathBuf>,
) -> Result<(), CmdError> {
    let mut config = read_config(config_path)?;
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    if let Some(out) = out_override {
        config.out_dir = out.display().to_string();
    }

    let env = config.build_env().map_err(usage_err)?;
    let schedule = config.build_schedule(&env).map_err(usage_err)?;
    let net_config = config.net_config();
    let opt_config = config.opt_config();
    let echo = config.echo();

    let out_dir = PathBuf::from(&config.out_dir);
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CmdError::Runtime(format!("cannot create {}: {e}", out_dir.display())))?;

    info!(
        "training {} env: {} stages, {} episodes total, output {}",
        config.kind.name(),
        schedule.stage_count(),
        schedule.total_episodes(),
        out_dir.display()
    );
    let (net, history) =
        train_with(&env, &schedule, &net_config, &opt_config, config.seed, |stage, net| {
            let path = out_dir.join(format!("stage_{stage:03}.ckpt"));
            save_checkpoint(&path, &echo, stage, net).map_err(|e| e.to_string())
        })
        .map_err(train_err)?;

    let final_path = out_dir.join("final.ckpt");
    save_checkpoint(&final_path, &echo, schedule.stage_count(), &net).map_err(ckpt_err)?;
    write_file(&out_dir.join("history_stages.csv"), &stages_csv(&history))?;
    write_file(&out_dir.join("history_episodes.csv"), &episodes_csv(&history))?;

    println!(
        "train: completed {} stages ({} episodes); final checkpoint {}",
        history.stages.len(),
        history.episodes.len(),
        final_path.display()
    );
    Ok(())
}

fn stages_csv(history: &TrainHistory) -> String {
    let mut text = String::from("stage,samples_added,memory_size,epochs,first_loss,final_loss,wall_seconds\n");
    for record in &history.stages {
        let first = record.losses.first().copied().unwrap_or(f64::NAN);
        let last = record.losses.last().copied().unwrap_or(f64::NAN);
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{:.3}",
            record.stage,
            record.samples_added,
            record.memory_size,
            record.losses.len(),
            fmt_float(first),
            fmt_float(last),
            record.wall_seconds
        );
    }
    text
}

fn episodes_csv(history: &TrainHistory) -> String {
    let mut text = String::from("stage,start_index,terminal_score\n");
    for record in &history.episodes {
        let _ = writeln!(text, "{},{},{}", record.stage, record.start_index, fmt_float(record.terminal_score));
    }
    text
}

/// Evaluate a checkpoint over fresh test episodes and write the report CSV.
/// The seed defaults to the one recorded in the checkpoint's config.
pub fn cmd_eval(
    ckpt_path: &Path,
    episodes: usize,
    seed_override: Option<u64>,
    out_override: Option<PathBuf>,
) -> Result<(), CmdError> {
    if episodes == 0 {
        return Err(CmdError::Usage("eval needs at least one episode".into()));
    }
    let (ckpt, config, net) = open_checkpoint(ckpt_path)?;
    let env = config
        .build_env()
        .map_err(|e| CmdError::Corrupt(format!("checkpoint config does not build: {e}")))?;
    if net.input_dim() != env.phase_dim() {
        return Err(CmdError::Corrupt(format!(
            "checkpoint network takes {} inputs but the {} env has phase dimension {}",
            net.input_dim(),
            config.kind.name(),
            env.phase_dim()
        )));
    }
    let seed = seed_override.unwrap_or(config.seed);

    let policy = DynamicsOperator::new(env.dt(), &net);
    let report = eval_terminal(&env, &policy, episodes, seed);
    if report.episodes.is_empty() {
        return Err(CmdError::Runtime(format!("all {episodes} evaluation episodes failed")));
    }
    let out_path = out_override.unwrap_or_else(|| ckpt_path.with_extension("eval.csv"));
    export_report_csv(&report, &out_path).map_err(eval_err)?;

    println!(
        "eval: mean terminal cost {:.4} ± {:.4} over {} episodes ({} failed), \
         checkpoint stage {}, seed {seed}; report {}",
        report.mean,
        report.std,
        report.episodes.len(),
        report.failed,
        ckpt.stage,
        out_path.display()
    );
    Ok(())
}

/// Arguments shared by the diagnostic modes; each mode reads the subset it
/// needs.
#[derive(Debug, Default)]
pub struct DiagnoseArgs {
    pub ckpt: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnoseMode {
    Gradcheck,
    Oracle,
    Pointwise,
    Regret,
}

pub fn cmd_diagnose(mode: DiagnoseMode, args: DiagnoseArgs) -> Result<(), CmdError> {
    match mode {
        DiagnoseMode::Gradcheck => diagnose_gradcheck(args.seed.unwrap_or(0)),
        DiagnoseMode::Oracle => diagnose_oracle(),
        DiagnoseMode::Pointwise => diagnose_pointwise(args),
        DiagnoseMode::Regret => diagnose_regret(args),
    }
}

/// Reverse-mode input gradients vs central finite differences over 100
/// random networks × 100 random inputs each.
fn diagnose_gradcheck(seed: u64) -> Result<(), CmdError> {
    const NETS: usize = 100;
    const INPUTS: usize = 100;
    let mut worst: f64 = 0.0;
    for i in 0..NETS {
        let mut rng = stream(seed, "gradcheck", i as u64);
        let d = i % 5 + 1;
        let widths = match i % 3 {
            0 => vec![d, 8, 8, 1],
            1 => vec![d, 16, 1],
            _ => vec![d, 4, 4, 4, 1],
        };
        let activation = if i % 4 == 3 { Activation::Softplus } else { Activation::Tanh };
        let net = ScoreNet::init_random(widths, activation, 1.0, &mut rng).map_err(net_err)?;
        for _ in 0..INPUTS {
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            worst = worst.max(net.finite_diff_check(&x, 1e-5).map_err(net_err)?);
        }
    }
    let pass = worst < GRADCHECK_TOLERANCE;
    println!(
        "gradcheck: max relative error {worst:.3e} over {NETS} nets x {INPUTS} inputs \
         (threshold {GRADCHECK_TOLERANCE:.0e}): {}",
        if pass { "pass" } else { "FAIL" }
    );
    if pass {
        Ok(())
    } else {
        Err(CmdError::Threshold(format!(
            "gradient check error {worst:.3e} exceeds {GRADCHECK_TOLERANCE:.0e}"
        )))
    }
}

/// Fixed non-degenerate phase starts for the harmonic-oscillator checks.
const ORACLE_STARTS: [(f64, f64); 5] =
    [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (-0.7, 0.3), (0.4, -1.2)];

/// Harmonic-oscillator checks: the rollout must equal the matrix power
/// [[1,dt],[−dt,1]]^n, and halving dt must shrink the one-step flow error by
/// about 4× per halving (first-order consistency).
fn diagnose_oracle() -> Result<(), CmdError> {
    let harmonic = AnalyticHamiltonian::Harmonic { state_dim: 1 };
    let dt = 0.01;

    let mut worst: f64 = 0.0;
    let operator = DynamicsOperator::new(dt, &harmonic);
    for &(s0, p0) in &ORACLE_STARTS {
        let start = PhasePoint::new(vec![s0], vec![p0]);
        let points = operator
            .rollout(&start, 21)
            .map_err(|e| CmdError::Runtime(e.to_string()))?;
        // m accumulates [[1,dt],[−dt,1]]^n.
        let mut m = [[1.0, 0.0], [0.0, 1.0]];
        for point in &points {
            let (s, p) = (m[0][0] * s0 + m[0][1] * p0, m[1][0] * s0 + m[1][1] * p0);
            worst = worst.max((point.s[0] - s).abs().max((point.p[0] - p).abs()));
            m = [
                [m[0][0] + dt * m[1][0], m[0][1] + dt * m[1][1]],
                [m[1][0] - dt * m[0][0], m[1][1] - dt * m[0][1]],
            ];
        }
    }
    let map_pass = worst <= ORACLE_TOLERANCE;
    println!(
        "oracle: symplectic-map deviation {worst:.3e} over 20 steps x {} starts \
         (threshold {ORACLE_TOLERANCE:.0e}): {}",
        ORACLE_STARTS.len(),
        if map_pass { "pass" } else { "FAIL" }
    );

    // One-step flow error at dt and three halvings.
    let mut errors = Vec::new();
    let mut step = dt;
    for _ in 0..4 {
        let operator = DynamicsOperator::new(step, &harmonic);
        let mut total = 0.0;
        for &(s0, p0) in &ORACLE_STARTS {
            let start = PhasePoint::new(vec![s0], vec![p0]);
            let euler = operator
                .rollout(&start, 2)
                .map_err(|e| CmdError::Runtime(e.to_string()))?;
            total += euler[1].distance(&harmonic.flow(&start, step));
        }
        errors.push(total);
        step /= 2.0;
    }
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    let flow_pass = ratios.iter().all(|&r| r >= ORACLE_HALVING_FACTOR);
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.2}")).collect();
    println!(
        "oracle: one-step flow error reduction per dt halving [{}] \
         (threshold {ORACLE_HALVING_FACTOR}): {}",
        shown.join(", "),
        if flow_pass { "pass" } else { "FAIL" }
    );

    if map_pass && flow_pass {
        Ok(())
    } else if map_pass {
        Err(CmdError::Threshold(format!(
            "flow-error reduction ratios [{}] fall below {ORACLE_HALVING_FACTOR}",
            shown.join(", ")
        )))
    } else {
        Err(CmdError::Threshold(format!(
            "symplectic-map deviation {worst:.3e} exceeds {ORACLE_TOLERANCE:.0e}"
        )))
    }
}

/// One-step operator error of a trained checkpoint against the analytic
/// quadratic flow over 500 held-out starts.
fn diagnose_pointwise(args: DiagnoseArgs) -> Result<(), CmdError> {
    let ckpt_path = args
        .ckpt
        .ok_or_else(|| CmdError::Usage("diagnose --mode pointwise needs --ckpt with a trained checkpoint".into()))?;
    let (_, config, net) = open_checkpoint(&ckpt_path)?;
    if config.kind != EnvKind::Quadratic {
        return Err(CmdError::Usage(format!(
            "pointwise diagnosis compares against the analytic quadratic flow; \
             the checkpoint is for the {} environment",
            config.kind.name()
        )));
    }
    let env = config
        .build_env()
        .map_err(|e| CmdError::Corrupt(format!("checkpoint config does not build: {e}")))?;
    if net.input_dim() != env.phase_dim() {
        return Err(CmdError::Corrupt(format!(
            "checkpoint network takes {} inputs but the env has phase dimension {}",
            net.input_dim(),
            env.phase_dim()
        )));
    }
    let seed = args.seed.unwrap_or(config.seed);

    let policy = DynamicsOperator::new(env.dt(), &net);
    let oracle = AnalyticHamiltonian::Quadratic {
        matrix: env.quadratic_matrix().expect("quadratic env").clone(),
    };
    let error = pointwise_error(&policy, &oracle, 1, 500, seed)
        .map_err(|e| CmdError::Runtime(e.to_string()))?;
    let pass = error.mean < POINTWISE_TOLERANCE;
    println!(
        "pointwise: mean one-step operator error {:.4e} ± {:.1e} over {} starts \
         (threshold {POINTWISE_TOLERANCE}): {}",
        error.mean,
        error.std_error,
        error.n,
        if pass { "pass" } else { "FAIL" }
    );
    if pass {
        Ok(())
    } else {
        Err(CmdError::Threshold(format!(
            "pointwise operator error {:.4e} exceeds {POINTWISE_TOLERANCE}",
            error.mean
        )))
    }
}

/// Train on a quadratic config and fit the cumulative-regret growth exponent.
fn diagnose_regret(args: DiagnoseArgs) -> Result<(), CmdError> {
    let config_path = args
        .config
        .ok_or_else(|| CmdError::Usage("diagnose --mode regret needs --config with a quadratic run config".into()))?;
    let mut config = read_config(&config_path)?;
    if config.kind != EnvKind::Quadratic {
        return Err(CmdError::Usage(format!(
            "regret diagnosis needs the analytic quadratic environment, got {}",
            config.kind.name()
        )));
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let env = config.build_env().map_err(usage_err)?;
    let schedule = config.build_schedule(&env).map_err(usage_err)?;

    info!("regret: training {} episodes over {} stages", schedule.total_episodes(), schedule.stage_count());
    let (_, history) =
        train(&env, &schedule, &config.net_config(), &config.opt_config(), config.seed).map_err(train_err)?;
    let curve = regret_estimate(&history, &env, config.seed).map_err(eval_err)?;
    if let Some(out) = &args.out {
        export_regret_csv(&curve, out).map_err(eval_err)?;
        info!("regret: curve written to {}", out.display());
    }

    let pass = curve.exponent < REGRET_EXPONENT_LIMIT;
    println!(
        "regret: cumulative-regret exponent {:.3} over {} episodes \
         ({} gaps clipped at zero{}) (threshold {REGRET_EXPONENT_LIMIT}): {}",
        curve.exponent,
        curve.gaps.len(),
        curve.clipped,
        if curve.zero_regret { ", zero regret throughout" } else { "" },
        if pass { "pass" } else { "FAIL" }
    );
    if pass {
        Ok(())
    } else {
        Err(CmdError::Threshold(format!(
            "cumulative-regret exponent {:.3} is not below {REGRET_EXPONENT_LIMIT}",
            curve.exponent
        )))
    }
}
