//! Stage-wise training of the dynamics operator.
//!
//! The loop runs stages k = 1…H−1. Stage k draws N_k fresh starts, rolls the
//! current operator G_{θ_{k−1}} out for the full horizon through the
//! environment, and appends to an append-only replay memory, per start:
//!
//! * the phase point after k−1 steps with its *true* observed score, and
//! * the points after j = 1…k−2 steps labeled by the previous network's own
//!   prediction (bootstrapped), freezing the earlier stages' targets.
//!
//! It then trains g_{θ_k} on the whole memory with a smooth-L1 loss
//! (warm-started from g_{θ_{k−1}}, fresh optimizer state) and returns the new
//! operator G_{θ_k} = Id + Δt·S∇g_{θ_k}. Everything is deterministic given
//! the run seed: starts, shuffles, and initialization each draw from their
//! own named substream.

use std::time::Instant;

use log::{info, warn};
use rand::seq::SliceRandom;
use thiserror::Error;

use crate::dynamics::DynamicsOperator;
use crate::envs::{Env, EnvError};
use crate::net::{Activation, Grads, LabeledSample, NetError, Provenance, Scratch, ScoreNet};
use crate::opt::OptimizerState;
use crate::rng::stream;

/// Hard per-stage cap on theory-mode sample counts.
pub const STAGE_SAMPLE_CAP: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: usize,
        #[source]
        source: EnvError,
    },
    #[error("network failure: {0}")]
    Net(#[from] NetError),
    #[error("stage {stage} observer failed: {message}")]
    Observer { stage: usize, message: String },
}

/// How per-stage sample counts are chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleMode {
    /// Spread a fixed episode budget uniformly over the H−1 stages.
    Budget { total_episodes: usize },
    /// N_k = ⌈C·ε^−(2d+4)⌉ — the general sample-complexity rate (bounded
    /// weights); astronomically large except for toy dimensions.
    TheoryGeneral { epsilon: f64, constant: f64, input_dim: usize },
    /// N_k = ⌈C·ε^−6⌉ — the weakly-convex special-case rate.
    TheorySpecial { epsilon: f64, constant: f64 },
}

/// Per-stage sample counts N_1…N_{H−1} and confidence split δ_1…δ_{H−1}
/// (δ_k = δ/3^{H−k}, tripling toward the final stage).
#[derive(Debug, Clone, PartialEq)]
pub struct StageSchedule {
    pub mode: ScheduleMode,
    pub per_stage: Vec<usize>,
    pub deltas: Vec<f64>,
    /// True when a theory-mode count hit [`STAGE_SAMPLE_CAP`].
    pub capped: bool,
}

impl StageSchedule {
    pub fn stage_count(&self) -> usize {
        self.per_stage.len()
    }

    pub fn total_episodes(&self) -> usize {
        self.per_stage.iter().sum()
    }
}

pub fn make_schedule(mode: ScheduleMode, horizon: usize, delta: f64) -> Result<StageSchedule, TrainError> {
    if horizon < 2 {
        return Err(TrainError::Config(format!("schedule needs a horizon of at least 2, got {horizon}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(TrainError::Config(format!("confidence delta must lie in (0, 1), got {delta}")));
    }
    let stages = horizon - 1;
    let mut capped = false;
    let mut theory_count = |raw: f64, label: &str| -> Result<usize, TrainError> {
        if !(raw > 0.0) {
            return Err(TrainError::Config(format!("{label} produced a nonpositive sample count {raw}")));
        }
        if raw > STAGE_SAMPLE_CAP as f64 {
            warn!("{label} asks for {raw:.3e} samples per stage; capping at {STAGE_SAMPLE_CAP}");
            capped = true;
            return Ok(STAGE_SAMPLE_CAP);
        }
        Ok(raw.ceil() as usize)
    };
    let per: usize = match mode {
        ScheduleMode::Budget { total_episodes } => {
            if total_episodes < stages {
                return Err(TrainError::Config(format!(
                    "episode budget {total_episodes} cannot cover {stages} stages"
                )));
            }
            total_episodes.div_ceil(stages)
        }
        ScheduleMode::TheoryGeneral { epsilon, constant, input_dim } => {
            if !(epsilon > 0.0) || !(constant > 0.0) {
                return Err(TrainError::Config("theory schedule needs ε > 0 and C > 0".into()));
            }
            let exponent = -(2 * input_dim.min(512) as i32 + 4);
            theory_count(constant * epsilon.powi(exponent), "general-rate schedule")?
        }
        ScheduleMode::TheorySpecial { epsilon, constant } => {
            if !(epsilon > 0.0) || !(constant > 0.0) {
                return Err(TrainError::Config("theory schedule needs ε > 0 and C > 0".into()));
            }
            theory_count(constant * epsilon.powi(-6), "special-rate schedule")?
        }
    };
    let per_stage = vec![per; stages];
    let deltas = (1..horizon).map(|k| delta / 3f64.powi((horizon - k) as i32)).collect();
    Ok(StageSchedule { mode, per_stage, deltas, capped })
}

/// Closed-form replay size after completing `through_stage` stages:
/// Σ_{j=1}^{k} N_j · max(1, j−1).
pub fn expected_memory_size(per_stage: &[usize], through_stage: usize) -> usize {
    per_stage[..through_stage]
        .iter()
        .enumerate()
        .map(|(idx, &n)| n * (idx.max(1)))
        .sum()
}

/// Append-only replay memory with per-stage extents for audits.
#[derive(Debug, Default, Clone)]
pub struct ReplayMemory {
    samples: Vec<LabeledSample>,
    stage_ends: Vec<usize>,
}

impl ReplayMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    /// Memory length recorded at the end of each completed stage.
    pub fn stage_ends(&self) -> &[usize] {
        &self.stage_ends
    }

    /// Commit a fully-built stage batch. Stages are all-or-nothing: callers
    /// assemble the batch first so a failed episode never leaves a partial
    /// stage behind.
    pub fn append_stage(&mut self, batch: Vec<LabeledSample>) {
        self.samples.extend(batch);
        self.stage_ends.push(self.samples.len());
    }
}

/// Network architecture for the learned score.
#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Initialization scale; small values start the operator near the
    /// identity.
    pub init_scale: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self { hidden: vec![64, 64], activation: Activation::Tanh, init_scale: 1e-2 }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.hidden.contains(&0) {
            return Err(TrainError::Config("hidden layer widths must be nonzero".into()));
        }
        if !(self.init_scale > 0.0) {
            return Err(TrainError::Config(format!("init scale must be positive, got {}", self.init_scale)));
        }
        Ok(())
    }

    pub fn widths(&self, input_dim: usize) -> Vec<usize> {
        let mut widths = Vec::with_capacity(self.hidden.len() + 2);
        widths.push(input_dim);
        widths.extend_from_slice(&self.hidden);
        widths.push(1);
        widths
    }
}

/// Per-stage optimization settings.
#[derive(Debug, Clone, PartialEq)]
pub struct OptConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Epoch budget per stage (passes over the whole memory).
    pub epochs: usize,
    /// Early stop when the epoch loss changes by less than this.
    pub plateau_tol: f64,
    /// Smooth-L1 transition point.
    pub loss_beta: f64,
    /// Optional hard clamp on every parameter after each step.
    pub weight_bound: Option<f64>,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 50,
            plateau_tol: 1e-6,
            loss_beta: 1.0,
            weight_bound: None,
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0) {
            return Err(TrainError::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(TrainError::Config("epoch budget must be at least 1".into()));
        }
        if !(self.plateau_tol >= 0.0) {
            return Err(TrainError::Config(format!("plateau tolerance must be nonnegative, got {}", self.plateau_tol)));
        }
        if !(self.loss_beta > 0.0) {
            return Err(TrainError::Config(format!("loss beta must be positive, got {}", self.loss_beta)));
        }
        if let Some(bound) = self.weight_bound {
            if !(bound > 0.0) {
                return Err(TrainError::Config(format!("weight bound must be positive, got {bound}")));
            }
        }
        Ok(())
    }
}

/// Bookkeeping for one completed stage.
#[derive(Debug, Clone)]
pub struct StageRecord {
    pub stage: usize,
    pub samples_added: usize,
    pub memory_size: usize,
    /// Mean training loss per epoch (stops early at plateau).
    pub losses: Vec<f64>,
    pub wall_seconds: f64,
}

/// One training episode's outcome (terminal score under the stage's policy).
#[derive(Debug, Clone, Copy)]
pub struct EpisodeRecord {
    pub stage: usize,
    pub start_index: usize,
    pub terminal_score: f64,
}

/// Full record of a training run.
#[derive(Debug, Clone)]
pub struct TrainHistory {
    pub stages: Vec<StageRecord>,
    pub episodes: Vec<EpisodeRecord>,
    /// Network snapshots θ_0, θ_1, …, θ_{H−1}; the policy that generated the
    /// episodes of stage k is snapshots[k−1].
    pub snapshots: Vec<ScoreNet>,
    pub per_stage_samples: Vec<usize>,
}

/// Run stage `stage`: sample starts, query the environment with the previous
/// operator, append the stage batch to memory (all-or-nothing), and train the
/// next score network on the whole memory.
pub fn run_stage(
    stage: usize,
    prev_net: &ScoreNet,
    memory: &mut ReplayMemory,
    env: &Env,
    stage_samples: usize,
    opt_config: &OptConfig,
    seed: u64,
) -> Result<(ScoreNet, StageRecord, Vec<EpisodeRecord>), TrainError> {
    assert!(stage >= 1 && stage < env.horizon(), "stage {stage} out of range for horizon {}", env.horizon());
    assert!(stage_samples >= 1, "a stage needs at least one episode");
    let clock = Instant::now();

    let mut start_rng = stream(seed, "stage-starts", stage as u64);
    let starts: Vec<_> = (0..stage_samples).map(|_| env.sample_start(&mut start_rng)).collect();
    let policy = DynamicsOperator::new(env.dt(), prev_net);
    let result = env.query(&policy, &starts);

    let mut batch = Vec::with_capacity(stage_samples * stage.max(2).saturating_sub(1));
    let mut episodes = Vec::with_capacity(stage_samples);
    for (start_index, outcome) in result.trajectories.into_iter().enumerate() {
        let trajectory = outcome.map_err(|source| TrainError::Stage { stage, source })?;
        episodes.push(EpisodeRecord { stage, start_index, terminal_score: trajectory.terminal_score() });
        // True-labeled pair at the stage's frontier point G^(k−1)(X).
        batch.push(LabeledSample {
            x: trajectory.points[stage - 1].to_flat(),
            y: trajectory.scores[stage - 1],
            stage,
            provenance: Provenance::TrueScore,
        });
        // Earlier points carry the previous network's own predictions.
        for j in 1..stage.saturating_sub(1) {
            let x = trajectory.points[j].to_flat();
            let y = prev_net.forward(&x)?;
            batch.push(LabeledSample { x, y, stage, provenance: Provenance::Bootstrapped });
        }
    }
    let samples_added = batch.len();
    memory.append_stage(batch);

    let mut net = prev_net.clone();
    let mut optimizer = OptimizerState::new(opt_config.learning_rate, opt_config.batch_size, &net)?;
    if let Some(bound) = opt_config.weight_bound {
        optimizer = optimizer.with_weight_bound(bound);
    }
    let mut shuffle_rng = stream(seed, "stage-shuffle", stage as u64);
    let mut order: Vec<usize> = (0..memory.len()).collect();
    let mut scratch = Scratch::for_net(&net);
    let mut grads = Grads::zeros_like(&net);
    let mut losses = Vec::with_capacity(opt_config.epochs);
    for _ in 0..opt_config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(opt_config.batch_size) {
            grads.fill_zero();
            for &idx in chunk {
                let sample = &memory.samples()[idx];
                epoch_loss +=
                    net.accumulate_sample(&sample.x, sample.y, opt_config.loss_beta, &mut scratch, &mut grads);
            }
            grads.scale(1.0 / chunk.len() as f64);
            optimizer.step(&mut net, &grads)?;
        }
        let mean = epoch_loss / memory.len() as f64;
        losses.push(mean);
        let n = losses.len();
        if n >= 2 && (losses[n - 2] - losses[n - 1]).abs() < opt_config.plateau_tol {
            break;
        }
    }

    let record = StageRecord {
        stage,
        samples_added,
        memory_size: memory.len(),
        losses,
        wall_seconds: clock.elapsed().as_secs_f64(),
    };
    Ok((net, record, episodes))
}

/// Run the full stage loop and return the final score network (the policy is
/// Id + Δt·S∇) together with the training history.
pub fn train(
    env: &Env,
    schedule: &StageSchedule,
    net_config: &NetConfig,
    opt_config: &OptConfig,
    seed: u64,
) -> Result<(ScoreNet, TrainHistory), TrainError> {
    train_with(env, schedule, net_config, opt_config, seed, |_, _| Ok(()))
}

/// Like [`train`], but calls `on_stage(stage, net)` after every completed
/// stage (for per-stage checkpointing and progress reporting). An observer
/// error aborts the run.
pub fn train_with<F>(
    env: &Env,
    schedule: &StageSchedule,
    net_config: &NetConfig,
    opt_config: &OptConfig,
    seed: u64,
    mut on_stage: F,
) -> Result<(ScoreNet, TrainHistory), TrainError>
where
    F: FnMut(usize, &ScoreNet) -> Result<(), String>,
{
    let horizon = env.horizon();
    if horizon < 2 {
        return Err(TrainError::Config(format!("training needs a horizon of at least 2, got {horizon}")));
    }
    if schedule.stage_count() != horizon - 1 {
        return Err(TrainError::Config(format!(
            "schedule covers {} stages but horizon {} needs {}",
            schedule.stage_count(),
            horizon,
            horizon - 1
        )));
    }
    net_config.validate()?;
    opt_config.validate()?;

    let clock = Instant::now();
    let mut init_rng = stream(seed, "theta0", 0);
    let theta0 = ScoreNet::init_random(
        net_config.widths(env.phase_dim()),
        net_config.activation,
        net_config.init_scale,
        &mut init_rng,
    )?;
    let mut history = TrainHistory {
        stages: Vec::with_capacity(horizon - 1),
        episodes: Vec::new(),
        snapshots: vec![theta0.clone()],
        per_stage_samples: schedule.per_stage.clone(),
    };
    let mut memory = ReplayMemory::new();
    let mut net = theta0;
    for stage in 1..horizon {
        let (next, record, episodes) =
            run_stage(stage, &net, &mut memory, env, schedule.per_stage[stage - 1], opt_config, seed)?;
        debug_assert_eq!(memory.len(), expected_memory_size(&schedule.per_stage, stage));
        info!(
            "stage {stage}/{}: +{} samples (memory {}), loss {:.3e} -> {:.3e} in {} epochs, {:.1}s",
            horizon - 1,
            record.samples_added,
            record.memory_size,
            record.losses.first().copied().unwrap_or(f64::NAN),
            record.losses.last().copied().unwrap_or(f64::NAN),
            record.losses.len(),
            record.wall_seconds,
        );
        history.stages.push(record);
        history.episodes.extend(episodes);
        history.snapshots.push(next.clone());
        net = next;
        on_stage(stage, &net).map_err(|message| TrainError::Observer { stage, message })?;
    }
    info!("training finished in {:.1}s", clock.elapsed().as_secs_f64());
    Ok((net, history))
}

/// Mean smooth-L1 loss of `net` on the memory subset with the given
/// provenance; `None` when the subset is empty. Diagnostic for the stage
/// non-increase property.
pub fn mean_loss_by_provenance(
    net: &ScoreNet,
    memory: &ReplayMemory,
    provenance: Provenance,
    beta: f64,
) -> Option<f64> {
    let subset: Vec<&LabeledSample> = memory.samples().iter().filter(|s| s.provenance == provenance).collect();
    if subset.is_empty() {
        return None;
    }
    Some(net.mean_loss(subset, beta).expect("subset is nonempty and well-shaped"))
}
