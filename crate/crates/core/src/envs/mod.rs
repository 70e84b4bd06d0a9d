//! Benchmark environments.
//!
//! Each environment bundles a scalar cost functional F over states, an
//! initial-state sampler, and a black-box query operation: given a dynamics
//! operator and a batch of starting points, roll out full trajectories and
//! return every visited phase point together with its observed score
//! g(s, p) = ½‖p‖² + F(s) (form-dependent). The environment never exposes
//! ∇F to the training loop; [`EnvScore`] provides a finite-difference view
//! of g for diagnostic oracles only.

pub mod bicubic;
pub mod grid;
pub mod quadratic;
pub mod spline;
pub mod surface;

use rand::Rng;
use thiserror::Error;

use crate::dynamics::{score_energy, DynamicsError, DynamicsOperator, ScoreForm, ScoreFunction};
use crate::linalg::SpdMatrix;
use crate::parallel::map_ordered;
use crate::phase::PhasePoint;

use grid::GridEnv;
use quadratic::QuadraticEnv;
use surface::SurfaceEnv;

/// Central-difference step for the diagnostic gradient of black-box costs.
pub const FD_STEP: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid environment configuration: {0}")]
    Config(String),
    #[error("state contains non-finite values")]
    NonFiniteState,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("degenerate shape: enclosed |area| = {area:e} is below 1e-9")]
    DegenerateShape { area: f64 },
    #[error("degenerate field: clamped mass integral {integral:e} is at or below 1e-6")]
    DegenerateField { integral: f64 },
    #[error("dynamics failure during query: {0}")]
    Dynamics(#[from] DynamicsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    Surface,
    Grid,
    Quadratic,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Surface => "surface",
            EnvKind::Grid => "grid",
            EnvKind::Quadratic => "quadratic",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text.trim().to_ascii_lowercase().as_str() {
            "surface" => Some(EnvKind::Surface),
            "grid" => Some(EnvKind::Grid),
            "quadratic" => Some(EnvKind::Quadratic),
            _ => None,
        }
    }
}

/// One rolled-out episode: every visited phase point and its observed score.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub points: Vec<PhasePoint>,
    pub scores: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn terminal_score(&self) -> f64 {
        *self.scores.last().expect("a trajectory contains at least its start")
    }
}

/// Result of a batched query. Failed episodes are reported in place (by start
/// index), never dropped.
#[derive(Debug)]
pub struct QueryResult {
    pub starts: Vec<PhasePoint>,
    pub trajectories: Vec<Result<Trajectory, EnvError>>,
}

impl QueryResult {
    pub fn failed_indices(&self) -> Vec<usize> {
        self.trajectories
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.is_err().then_some(i))
            .collect()
    }
}

#[derive(Debug)]
enum Inner {
    Surface(SurfaceEnv),
    Grid(GridEnv),
    Quadratic(QuadraticEnv),
}

/// An environment instance: cost functional, start distribution, episode
/// horizon, and step size.
#[derive(Debug)]
pub struct Env {
    inner: Inner,
    horizon: usize,
    dt: f64,
    score_form: ScoreForm,
}

impl Env {
    fn validate_episode(horizon: usize, dt: f64) -> Result<(), EnvError> {
        if horizon == 0 {
            return Err(EnvError::Config("horizon must be at least 1".into()));
        }
        if !dt.is_finite() || dt < 0.0 {
            return Err(EnvError::Config(format!("step size must be finite and nonnegative, got {dt}")));
        }
        Ok(())
    }

    pub fn surface(control_points: usize, horizon: usize, dt: f64, score_form: ScoreForm) -> Result<Self, EnvError> {
        Self::validate_episode(horizon, dt)?;
        Ok(Self { inner: Inner::Surface(SurfaceEnv::new(control_points)?), horizon, dt, score_form })
    }

    pub fn grid(m: usize, fine_factor: usize, horizon: usize, dt: f64, score_form: ScoreForm) -> Result<Self, EnvError> {
        Self::validate_episode(horizon, dt)?;
        Ok(Self { inner: Inner::Grid(GridEnv::new(m, fine_factor)?), horizon, dt, score_form })
    }

    pub fn quadratic(matrix: SpdMatrix, horizon: usize, dt: f64, score_form: ScoreForm) -> Result<Self, EnvError> {
        Self::validate_episode(horizon, dt)?;
        Ok(Self { inner: Inner::Quadratic(QuadraticEnv::new(matrix)), horizon, dt, score_form })
    }

    pub fn kind(&self) -> EnvKind {
        match self.inner {
            Inner::Surface(_) => EnvKind::Surface,
            Inner::Grid(_) => EnvKind::Grid,
            Inner::Quadratic(_) => EnvKind::Quadratic,
        }
    }

    pub fn state_dim(&self) -> usize {
        match &self.inner {
            Inner::Surface(env) => env.state_dim(),
            Inner::Grid(env) => env.state_dim(),
            Inner::Quadratic(env) => env.state_dim(),
        }
    }

    pub fn phase_dim(&self) -> usize {
        2 * self.state_dim()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn score_form(&self) -> ScoreForm {
        self.score_form
    }

    /// Grid refinement ratio, if this is a grid environment.
    pub fn fine_factor(&self) -> Option<usize> {
        match &self.inner {
            Inner::Grid(env) => Some(env.fine_factor()),
            _ => None,
        }
    }

    /// The quadratic potential matrix, if this is the analytic environment.
    pub fn quadratic_matrix(&self) -> Option<&SpdMatrix> {
        match &self.inner {
            Inner::Quadratic(env) => Some(env.matrix()),
            _ => None,
        }
    }

    /// Cost functional F at a bare state vector.
    pub fn cost(&self, state: &[f64]) -> Result<f64, EnvError> {
        if state.len() != self.state_dim() {
            return Err(EnvError::DimMismatch { expected: self.state_dim(), got: state.len() });
        }
        match &self.inner {
            Inner::Surface(env) => env.cost(state),
            Inner::Grid(env) => env.cost(state),
            Inner::Quadratic(env) => env.cost(state),
        }
    }

    /// Observed score g at a phase point.
    pub fn score(&self, x: &PhasePoint) -> Result<f64, EnvError> {
        let cost = self.cost(&x.s)?;
        Ok(score_energy(self.score_form, &x.p, cost))
    }

    /// Draw a start from the initial distribution; the adjoint half is zero.
    pub fn sample_start<R: Rng + ?Sized>(&self, rng: &mut R) -> PhasePoint {
        let state = match &self.inner {
            Inner::Surface(env) => env.sample(rng),
            Inner::Grid(env) => env.sample(rng),
            Inner::Quadratic(env) => env.sample(rng),
        };
        PhasePoint::from_state(state)
    }

    /// Black-box query: roll the operator out from every start for the full
    /// horizon and score every visited point. Starts are evaluated
    /// concurrently; results are ordered by start index.
    pub fn query(&self, policy: &DynamicsOperator, starts: &[PhasePoint]) -> QueryResult {
        let trajectories = map_ordered(starts, |_, start| self.episode(policy, start));
        QueryResult { starts: starts.to_vec(), trajectories }
    }

    fn episode(&self, policy: &DynamicsOperator, start: &PhasePoint) -> Result<Trajectory, EnvError> {
        let points = policy.rollout(start, self.horizon)?;
        let mut scores = Vec::with_capacity(points.len());
        for point in &points {
            scores.push(self.score(point)?);
        }
        Ok(Trajectory { points, scores })
    }

    /// Diagnostic view of the true score as a differentiable function.
    pub fn score_function(&self) -> EnvScore<'_> {
        EnvScore { env: self }
    }

    /// Number of cost evaluations that tripped a warning (currently:
    /// self-intersecting surface boundaries).
    pub fn warnings(&self) -> u64 {
        match &self.inner {
            Inner::Surface(env) => env.warnings(),
            _ => 0,
        }
    }
}

/// The true score g as a [`ScoreFunction`], for diagnostics only: ∂g/∂s uses
/// the analytic gradient when one exists (quadratic) and central finite
/// differences with step [`FD_STEP`] otherwise; ∂g/∂p is analytic. Errors
/// surface as NaN so a dynamics operator reports them as gradient failures.
#[derive(Debug, Clone, Copy)]
pub struct EnvScore<'a> {
    env: &'a Env,
}

impl ScoreFunction for EnvScore<'_> {
    fn dim(&self) -> usize {
        self.env.phase_dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim(), "phase dimension mismatch");
        let (s, p) = x.split_at(x.len() / 2);
        match self.env.cost(s) {
            Ok(cost) => score_energy(self.env.score_form, p, cost),
            Err(_) => f64::NAN,
        }
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim(), "phase dimension mismatch");
        let d = x.len() / 2;
        let (s, p) = x.split_at(d);
        let mut grad = vec![0.0; x.len()];
        match &self.env.inner {
            Inner::Quadratic(env) => grad[..d].copy_from_slice(&env.matrix().mul(s)),
            _ => {
                let mut probe = s.to_vec();
                for i in 0..d {
                    let center = probe[i];
                    probe[i] = center + FD_STEP;
                    let plus = self.env.cost(&probe);
                    probe[i] = center - FD_STEP;
                    let minus = self.env.cost(&probe);
                    probe[i] = center;
                    match (plus, minus) {
                        (Ok(hi), Ok(lo)) => grad[i] = (hi - lo) / (2.0 * FD_STEP),
                        _ => return vec![f64::NAN; x.len()],
                    }
                }
            }
        }
        if matches!(self.env.score_form, ScoreForm::Legendre) {
            grad[d..].copy_from_slice(p);
        }
        grad
    }
}
