//! Differential policy optimization over Hamiltonian dual dynamics.
//!
//! The library is organised bottom-up:
//!
//! - [`rng`] / [`parallel`]: deterministic random streams and bounded fork-join.
//! - [`linalg`]: tridiagonal solvers and a Jacobi eigen-solver for SPD matrices.
//! - [`net`] / [`opt`]: a small fully-connected score network with reverse-mode
//!   gradients, smooth-L1 loss, and an Adam optimizer.
//! - [`phase`] / [`dynamics`]: phase-space points, the symplectic pairing, the
//!   discrete dynamics operator, and analytic reference Hamiltonians.
//! - [`envs`]: benchmark environments (closed-curve surface modeling, grid
//!   field smoothing, and an analytic quadratic oracle).
//! - [`trainer`]: stage-wise training with replay memory and bootstrapped labels.
//! - [`eval`]: terminal-cost evaluation, pointwise operator error, regret
//!   curves, and CSV/JSON export.

// Hyperparameter guards are written `!(x > 0.0)` so that NaN is rejected
// along with non-positive values; the lint's suggested `x <= 0.0` lets NaN
// through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// The linear-algebra and network kernels index rows/columns of flat buffers
// by position on purpose; iterator rewrites obscure the matrix structure.
#![allow(clippy::needless_range_loop)]

pub mod rng;
pub mod parallel;
pub mod linalg;
pub mod net;
pub mod opt;
pub mod phase;
pub mod dynamics;
pub mod envs;
pub mod trainer;
pub mod eval;

pub use dynamics::{AnalyticHamiltonian, DynamicsError, DynamicsOperator, ScoreForm, ScoreFunction};
pub use envs::{Env, EnvError, EnvKind};
pub use eval::{
    eval_terminal, eval_terminal_at, pointwise_error, pointwise_error_over, regret_estimate,
    EvalError, EvalReport, PointwiseError, RegretCurve,
};
pub use net::{Activation, LabeledSample, NetError, Provenance, ScoreNet};
pub use opt::OptimizerState;
pub use phase::PhasePoint;
pub use trainer::{
    make_schedule, train, NetConfig, OptConfig, ScheduleMode, StageSchedule, TrainError,
    TrainHistory,
};
