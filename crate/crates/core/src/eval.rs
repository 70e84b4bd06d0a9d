//! Measurement harness: terminal evaluation cost, pointwise operator error
//! against analytic oracles, empirical regret curves with a fitted growth
//! exponent, and CSV/JSON export.
//!
//! Conventions:
//!
//! * Terminal evaluation rolls the policy for the full horizon from fresh
//!   starts and records the cost F at the final state of each episode.
//! * Pointwise error measures E‖G_θ^(j)(X) − G^(j)(X)‖ where G is the
//!   oracle's exact *discrete* step map at the same Δt, isolating learning
//!   error from discretization error. Starts are drawn like the analytic
//!   environment's ρ_0 (standard-normal state, zero adjoint).
//! * Regret compares, per training episode, the value of the policy snapshot
//!   that generated the episode against the value of the analytic optimal
//!   flow from the same start, with rewards r = ½‖a‖² − F(s) accumulated by a
//!   left-rectangle rule over the episode window; the optimal value uses 100
//!   flow substeps per coarse step. Gaps are floored at zero (count kept) so
//!   the cumulative curve is nondecreasing; the growth exponent is the
//!   log-log least-squares slope over the last half of the episodes.

use std::fmt::Write as _;
use std::path::Path;

use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{AnalyticHamiltonian, DynamicsError, DynamicsOperator};
use crate::envs::{Env, EnvError};
use crate::parallel::map_ordered;
use crate::phase::PhasePoint;
use crate::rng::stream;
use crate::trainer::TrainHistory;

/// Flow substeps per coarse step when integrating the optimal value.
pub const FINE_SUBSTEPS: usize = 100;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("unsupported environment for this diagnostic: {0}")]
    Unsupported(String),
    #[error("training history is inconsistent: {0}")]
    History(String),
    #[error("dynamics failure: {0}")]
    Dynamics(#[from] DynamicsError),
    #[error("environment failure: {0}")]
    Env(#[from] EnvError),
    #[error("i/o failure at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed data at {path}: {reason}")]
    Parse { path: String, reason: String },
}

fn io_err(path: &Path, source: std::io::Error) -> EvalError {
    EvalError::Io { path: path.display().to_string(), source }
}

fn parse_err(path: &Path, reason: impl Into<String>) -> EvalError {
    EvalError::Parse { path: path.display().to_string(), reason: reason.into() }
}

/// Serialize a float with 17 significant digits (lossless for f64).
fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Terminal-cost evaluation over a batch of test episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Indices of the episodes that evaluated successfully.
    pub episodes: Vec<usize>,
    /// Terminal cost F at the final state, parallel to `episodes`.
    pub terminal_costs: Vec<f64>,
    /// Episodes that failed (degenerate state, dynamics blow-up, …).
    pub failed: usize,
    pub mean: f64,
    pub std: f64,
    /// Mean cost at every step index across successful episodes.
    pub step_mean_costs: Vec<f64>,
    pub seed: u64,
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Evaluate terminal cost from explicitly given starts.
pub fn eval_terminal_at(env: &Env, policy: &DynamicsOperator, starts: &[PhasePoint], seed: u64) -> EvalReport {
    assert!(!starts.is_empty(), "evaluation needs at least one episode");
    let horizon = env.horizon();
    let outcomes = map_ordered(starts, |_, start| -> Result<Vec<f64>, EnvError> {
        let points = policy.rollout(start, horizon)?;
        points.iter().map(|x| env.cost(&x.s)).collect()
    });
    let mut episodes = Vec::new();
    let mut terminal_costs = Vec::new();
    let mut step_sums = vec![0.0; horizon];
    let mut failed = 0usize;
    for (index, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(costs) => {
                episodes.push(index);
                terminal_costs.push(*costs.last().expect("horizon >= 1"));
                for (sum, c) in step_sums.iter_mut().zip(&costs) {
                    *sum += c;
                }
            }
            Err(error) => {
                log::warn!("evaluation episode {index} failed: {error}");
                failed += 1;
            }
        }
    }
    let ok = episodes.len().max(1) as f64;
    let step_mean_costs = step_sums.iter().map(|s| s / ok).collect();
    let (mean, std) = mean_and_std(&terminal_costs);
    EvalReport { episodes, terminal_costs, failed, mean, std, step_mean_costs, seed }
}

/// Evaluate terminal cost over `n_episodes` fresh starts drawn from ρ_0.
pub fn eval_terminal(env: &Env, policy: &DynamicsOperator, n_episodes: usize, seed: u64) -> EvalReport {
    assert!(n_episodes >= 1, "evaluation needs at least one episode");
    let mut rng = stream(seed, "eval-starts", 0);
    let starts: Vec<PhasePoint> = (0..n_episodes).map(|_| env.sample_start(&mut rng)).collect();
    eval_terminal_at(env, policy, &starts, seed)
}

/// Monte-Carlo estimate of a pointwise operator error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointwiseError {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

/// E‖policy^(j)(X) − reference^(j)(X)‖ over the given starts.
pub fn pointwise_error_over(
    policy: &DynamicsOperator,
    reference: &DynamicsOperator,
    j: usize,
    starts: &[PhasePoint],
) -> Result<PointwiseError, DynamicsError> {
    assert!(j >= 1, "pointwise error is defined for j >= 1");
    assert!(!starts.is_empty(), "pointwise error needs at least one start");
    let distances = map_ordered(starts, |_, start| -> Result<f64, DynamicsError> {
        let ours = policy.rollout(start, j + 1)?;
        let truth = reference.rollout(start, j + 1)?;
        Ok(ours.last().unwrap().distance(truth.last().unwrap()))
    });
    let mut values = Vec::with_capacity(starts.len());
    for d in distances {
        values.push(d?);
    }
    let (mean, std) = mean_and_std(&values);
    let std_error = if values.len() > 1 { std / (values.len() as f64).sqrt() } else { 0.0 };
    Ok(PointwiseError { mean, std_error, n: values.len() })
}

/// Sample `n` starts like the analytic environment's ρ_0 (standard-normal
/// state, zero adjoint) and measure the pointwise error of `policy` against
/// the oracle's exact discrete step map at the policy's own Δt.
pub fn pointwise_error(
    policy: &DynamicsOperator,
    oracle: &AnalyticHamiltonian,
    j: usize,
    n: usize,
    seed: u64,
) -> Result<PointwiseError, DynamicsError> {
    let reference = DynamicsOperator::new(policy.dt(), oracle);
    let mut rng = stream(seed, "pointwise-starts", 0);
    let d = oracle.state_dim();
    let starts: Vec<PhasePoint> = (0..n)
        .map(|_| {
            use rand::Rng;
            let s: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            PhasePoint::from_state(s)
        })
        .collect();
    pointwise_error_over(policy, &reference, j, &starts)
}

/// Empirical cumulative-regret curve over the training episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretCurve {
    /// Per-episode optimality gaps, floored at zero.
    pub gaps: Vec<f64>,
    /// Running sum of the gaps (nondecreasing).
    pub cumulative: Vec<f64>,
    /// Log-log least-squares slope of the cumulative curve over the last
    /// half of the episodes; 0 when underdetermined (see `zero_regret`).
    pub exponent: f64,
    /// Number of raw gaps that were negative and got floored.
    pub clipped: usize,
    /// True when every gap is zero (the policy matched the optimum).
    pub zero_regret: bool,
}

/// Least-squares slope of ln(cumulative) against ln(episode) over the last
/// half of the curve, skipping zero entries; `None` with fewer than two
/// usable points.
fn fit_loglog_exponent(cumulative: &[f64]) -> Option<f64> {
    let len = cumulative.len();
    let from = len / 2;
    let points: Vec<(f64, f64)> = (from..len)
        .filter(|&i| cumulative[i] > 0.0)
        .map(|i| (((i + 1) as f64).ln(), cumulative[i].ln()))
        .collect();
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.0 - mean_x)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

impl RegretCurve {
    /// Build the curve from raw per-episode gaps: floor at zero, accumulate,
    /// and fit the growth exponent.
    pub fn from_gaps(raw_gaps: Vec<f64>) -> Self {
        let mut clipped = 0usize;
        let gaps: Vec<f64> = raw_gaps
            .into_iter()
            .map(|g| {
                if g < 0.0 {
                    clipped += 1;
                    0.0
                } else {
                    g
                }
            })
            .collect();
        let mut cumulative = Vec::with_capacity(gaps.len());
        let mut sum = 0.0;
        for g in &gaps {
            sum += g;
            cumulative.push(sum);
        }
        let zero_regret = gaps.iter().all(|&g| g == 0.0);
        let exponent = fit_loglog_exponent(&cumulative).unwrap_or(0.0);
        RegretCurve { gaps, cumulative, exponent, clipped, zero_regret }
    }
}

/// Value of one discrete trajectory: Δt · Σ_t (½‖p_t‖² − F(s_t)).
fn discrete_value(env: &Env, points: &[PhasePoint]) -> Result<f64, EnvError> {
    let mut sum = 0.0;
    for x in points {
        let kinetic = 0.5 * x.p.iter().map(|v| v * v).sum::<f64>();
        sum += kinetic - env.cost(&x.s)?;
    }
    Ok(env.dt() * sum)
}

/// Optimal value from `start`: left-rectangle integral of the reward along
/// the analytic flow, with `FINE_SUBSTEPS` substeps per coarse step.
fn flow_value(env: &Env, oracle: &AnalyticHamiltonian, start: &PhasePoint) -> Result<f64, EnvError> {
    let fine_dt = env.dt() / FINE_SUBSTEPS as f64;
    let total = env.horizon() * FINE_SUBSTEPS;
    let mut sum = 0.0;
    for i in 0..total {
        let x = oracle.flow(start, i as f64 * fine_dt);
        let kinetic = 0.5 * x.p.iter().map(|v| v * v).sum::<f64>();
        sum += kinetic - env.cost(&x.s)?;
    }
    Ok(fine_dt * sum)
}

/// Empirical regret over a training run on the analytic quadratic
/// environment. Per episode, the gap V(s) − V_π(s) compares the optimal-flow
/// value against the value of the policy snapshot that generated the episode
/// (`history.snapshots[stage − 1]`). Starts are re-derived from the run seed;
/// each re-rolled trajectory is cross-checked against the recorded terminal
/// score.
pub fn regret_estimate(history: &TrainHistory, env: &Env, seed: u64) -> Result<RegretCurve, EvalError> {
    let matrix = env
        .quadratic_matrix()
        .ok_or_else(|| EvalError::Unsupported(format!("regret needs the quadratic oracle environment, got {}", env.kind().name())))?;
    let oracle = AnalyticHamiltonian::Quadratic { matrix: matrix.clone() };
    if history.snapshots.len() != history.per_stage_samples.len() + 1 {
        return Err(EvalError::History(format!(
            "{} snapshots do not cover {} stages",
            history.snapshots.len(),
            history.per_stage_samples.len()
        )));
    }

    let mut gaps = Vec::with_capacity(history.episodes.len());
    let mut episode_iter = history.episodes.iter();
    for (stage_idx, &n_k) in history.per_stage_samples.iter().enumerate() {
        let stage = stage_idx + 1;
        let mut start_rng = stream(seed, "stage-starts", stage as u64);
        let starts: Vec<PhasePoint> = (0..n_k).map(|_| env.sample_start(&mut start_rng)).collect();
        let snapshot = &history.snapshots[stage - 1];
        let policy = DynamicsOperator::new(env.dt(), snapshot);
        for (i, start) in starts.iter().enumerate() {
            let record = episode_iter.next().ok_or_else(|| {
                EvalError::History(format!("episode list ended before stage {stage} start {i}"))
            })?;
            if record.stage != stage || record.start_index != i {
                return Err(EvalError::History(format!(
                    "episode order mismatch at stage {stage} start {i}: found stage {} start {}",
                    record.stage, record.start_index
                )));
            }
            let points = policy.rollout(start, env.horizon()).map_err(EnvError::from)?;
            let replayed_score = env.score(points.last().expect("horizon >= 1"))?;
            let scale = record.terminal_score.abs().max(1.0);
            if (replayed_score - record.terminal_score).abs() / scale > 1e-12 {
                return Err(EvalError::History(format!(
                    "stage {stage} start {i}: replayed terminal score {replayed_score} \
                     does not match the recorded {}; wrong seed or history?",
                    record.terminal_score
                )));
            }
            let v_policy = discrete_value(env, &points)?;
            let v_optimal = flow_value(env, &oracle, start)?;
            gaps.push(v_optimal - v_policy);
        }
    }
    if episode_iter.next().is_some() {
        return Err(EvalError::History("episode list is longer than the schedule".into()));
    }
    Ok(RegretCurve::from_gaps(gaps))
}

/// Export an evaluation report as CSV (`episode,terminal_cost,seed`).
pub fn export_report_csv(report: &EvalReport, path: &Path) -> Result<(), EvalError> {
    let mut text = String::from("episode,terminal_cost,seed\n");
    for (episode, cost) in report.episodes.iter().zip(&report.terminal_costs) {
        let _ = writeln!(text, "{episode},{},{}", fmt_float(*cost), report.seed);
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Import the per-episode data written by [`export_report_csv`]. The CSV
/// carries only episodes, terminal costs, and the seed; mean and std are
/// recomputed and the remaining fields are empty.
pub fn import_report_csv(path: &Path) -> Result<EvalReport, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some("episode,terminal_cost,seed") => {}
        other => return Err(parse_err(path, format!("unexpected header {other:?}"))),
    }
    let mut episodes = Vec::new();
    let mut terminal_costs = Vec::new();
    let mut seed = 0u64;
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(parse_err(path, format!("line {}: expected 3 fields", lineno + 2)));
        }
        let episode: usize =
            fields[0].parse().map_err(|e| parse_err(path, format!("line {}: {e}", lineno + 2)))?;
        let cost: f64 =
            fields[1].parse().map_err(|e| parse_err(path, format!("line {}: {e}", lineno + 2)))?;
        seed = fields[2].parse().map_err(|e| parse_err(path, format!("line {}: {e}", lineno + 2)))?;
        episodes.push(episode);
        terminal_costs.push(cost);
    }
    let (mean, std) = mean_and_std(&terminal_costs);
    Ok(EvalReport { episodes, terminal_costs, failed: 0, mean, std, step_mean_costs: Vec::new(), seed })
}

/// Export a regret curve as CSV (`episode,gap,cum_regret`).
pub fn export_regret_csv(curve: &RegretCurve, path: &Path) -> Result<(), EvalError> {
    let mut text = String::from("episode,gap,cum_regret\n");
    for (i, (gap, cum)) in curve.gaps.iter().zip(&curve.cumulative).enumerate() {
        let _ = writeln!(text, "{},{},{}", i + 1, fmt_float(*gap), fmt_float(*cum));
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Import the per-episode data written by [`export_regret_csv`], rebuilding
/// the derived fields from the gaps.
pub fn import_regret_csv(path: &Path) -> Result<RegretCurve, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some("episode,gap,cum_regret") => {}
        other => return Err(parse_err(path, format!("unexpected header {other:?}"))),
    }
    let mut gaps = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(parse_err(path, format!("line {}: expected 3 fields", lineno + 2)));
        }
        let gap: f64 =
            fields[1].parse().map_err(|e| parse_err(path, format!("line {}: {e}", lineno + 2)))?;
        gaps.push(gap);
    }
    Ok(RegretCurve::from_gaps(gaps))
}

/// Export either structure as JSON (full fidelity, round-trips exactly).
pub fn export_json<T: Serialize>(value: &T, path: &Path) -> Result<(), EvalError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| parse_err(path, format!("serialization failed: {e}")))?;
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Import a JSON file written by [`export_json`].
pub fn import_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.to_string()))
}
