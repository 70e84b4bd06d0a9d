//! The symplectic structure, the discrete dynamics operator, and analytic
//! reference Hamiltonians.
//!
//! The policy is the operator G(x) = x + Δt·S∇g(x), one explicit-Euler step
//! of the dual flow ẋ = S∇g(x) with the canonical symplectic matrix
//! S = [[0, I], [−I, 0]]. With the energy score g(s,p) = ½‖p‖² + F(s) this is
//! exactly s' = s + Δt·p, p' = p − Δt·∇F(s) — Newtonian motion in the
//! potential F. Analytic Hamiltonians provide closed-form gradients and exact
//! continuous flows for use as test oracles.

use crate::linalg::SpdMatrix;
use crate::phase::PhasePoint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("phase vector has odd dimension {dim}")]
    OddDimension { dim: usize },
    #[error("non-finite score gradient at phase point (first entries {head:?})")]
    NonFiniteGradient { head: Vec<f64> },
    #[error("rollout failed at step {index}: {source}")]
    RolloutFailed { index: usize, source: Box<DynamicsError> },
}

/// Which algebraic form the environments use for the score g(s, p).
///
/// `Legendre` is ½‖p‖² + F(s), the value of the Legendre transform at the
/// stationary action a* = p. `CostOnly` is the degenerate alternative
/// g(s, p) = F(s) with no kinetic term, under which ∂g/∂p = 0 and the state
/// never moves; it is exposed only so the difference is observable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreForm {
    Legendre,
    CostOnly,
}

impl ScoreForm {
    pub fn name(self) -> &'static str {
        match self {
            ScoreForm::Legendre => "legendre",
            ScoreForm::CostOnly => "cost_only",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "legendre" => Some(ScoreForm::Legendre),
            "cost_only" => Some(ScoreForm::CostOnly),
            _ => None,
        }
    }
}

/// Combine kinetic and potential parts into the score value for a form.
pub fn score_energy(form: ScoreForm, p: &[f64], cost_at_s: f64) -> f64 {
    match form {
        ScoreForm::Legendre => 0.5 * p.iter().map(|v| v * v).sum::<f64>() + cost_at_s,
        ScoreForm::CostOnly => cost_at_s,
    }
}

/// Multiply a phase-space gradient by the canonical symplectic matrix:
/// (∂g/∂s, ∂g/∂p) ↦ (∂g/∂p, −∂g/∂s).
pub fn symplectic_apply(grad: &[f64]) -> Result<Vec<f64>, DynamicsError> {
    if !grad.len().is_multiple_of(2) {
        return Err(DynamicsError::OddDimension { dim: grad.len() });
    }
    let d = grad.len() / 2;
    let mut out = Vec::with_capacity(grad.len());
    out.extend_from_slice(&grad[d..]);
    out.extend(grad[..d].iter().map(|v| -v));
    Ok(out)
}

/// A scalar score over phase space with an evaluable gradient: either a
/// learned network or an analytic Hamiltonian. Fallible backends signal
/// failure through non-finite values, which the dynamics operator reports.
pub trait ScoreFunction: Sync {
    /// Full phase dimension d the function expects.
    fn dim(&self) -> usize;
    /// g(x) for a flat phase vector x = (s, p).
    fn value(&self, x: &[f64]) -> f64;
    /// ∇g(x), same layout.
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
}

impl ScoreFunction for crate::net::ScoreNet {
    fn dim(&self) -> usize {
        self.input_dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.forward(x).expect("phase dimension must match network input width")
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.grad_input(x).expect("phase dimension must match network input width")
    }
}

/// Closed-form reference Hamiltonians h(s, p) = ½‖p‖² + V(s).
///
/// `FreeParticle` has V = 0, `Harmonic` has V = ½‖s‖², and `Quadratic` has
/// V = ½ sᵀA s for an SPD matrix A. All three admit exact continuous flows,
/// which serve as the optimal-operator oracles in the diagnostics.
#[derive(Debug, Clone)]
pub enum AnalyticHamiltonian {
    FreeParticle { state_dim: usize },
    Harmonic { state_dim: usize },
    Quadratic { matrix: SpdMatrix },
}

impl AnalyticHamiltonian {
    pub fn state_dim(&self) -> usize {
        match self {
            AnalyticHamiltonian::FreeParticle { state_dim } | AnalyticHamiltonian::Harmonic { state_dim } => {
                *state_dim
            }
            AnalyticHamiltonian::Quadratic { matrix } => matrix.dim(),
        }
    }

    fn potential(&self, s: &[f64]) -> f64 {
        match self {
            AnalyticHamiltonian::FreeParticle { .. } => 0.0,
            AnalyticHamiltonian::Harmonic { .. } => 0.5 * s.iter().map(|v| v * v).sum::<f64>(),
            AnalyticHamiltonian::Quadratic { matrix } => 0.5 * matrix.quad_form(s),
        }
    }

    fn potential_gradient(&self, s: &[f64]) -> Vec<f64> {
        match self {
            AnalyticHamiltonian::FreeParticle { .. } => vec![0.0; s.len()],
            AnalyticHamiltonian::Harmonic { .. } => s.to_vec(),
            AnalyticHamiltonian::Quadratic { matrix } => matrix.mul(s),
        }
    }

    /// Exact continuous-time flow of ṡ = p, ṗ = −∇V(s) for time `t`.
    pub fn flow(&self, x0: &PhasePoint, t: f64) -> PhasePoint {
        assert_eq!(x0.state_dim(), self.state_dim(), "phase point dimension must match the Hamiltonian");
        match self {
            AnalyticHamiltonian::FreeParticle { .. } => {
                let s = x0.s.iter().zip(&x0.p).map(|(s, p)| s + t * p).collect();
                PhasePoint::new(s, x0.p.clone())
            }
            AnalyticHamiltonian::Harmonic { .. } => {
                let (cos, sin) = (t.cos(), t.sin());
                let s = x0.s.iter().zip(&x0.p).map(|(s, p)| s * cos + p * sin).collect();
                let p = x0.s.iter().zip(&x0.p).map(|(s, p)| p * cos - s * sin).collect();
                PhasePoint::new(s, p)
            }
            AnalyticHamiltonian::Quadratic { matrix } => {
                // In the eigenbasis each coordinate is an independent oscillator
                // with frequency ω = √λ: s̃(t) = s̃ cos ωt + (p̃/ω) sin ωt.
                let s_e = matrix.to_eigenbasis(&x0.s);
                let p_e = matrix.to_eigenbasis(&x0.p);
                let mut s_t = vec![0.0; s_e.len()];
                let mut p_t = vec![0.0; p_e.len()];
                for (i, &lambda) in matrix.eigenvalues().iter().enumerate() {
                    let omega = lambda.sqrt();
                    let (cos, sin) = ((omega * t).cos(), (omega * t).sin());
                    s_t[i] = s_e[i] * cos + p_e[i] / omega * sin;
                    p_t[i] = p_e[i] * cos - omega * s_e[i] * sin;
                }
                PhasePoint::new(matrix.from_eigenbasis(&s_t), matrix.from_eigenbasis(&p_t))
            }
        }
    }
}

impl ScoreFunction for AnalyticHamiltonian {
    fn dim(&self) -> usize {
        2 * self.state_dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let d = self.state_dim();
        assert_eq!(x.len(), 2 * d, "flat phase vector has wrong dimension");
        let (s, p) = x.split_at(d);
        0.5 * p.iter().map(|v| v * v).sum::<f64>() + self.potential(s)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let d = self.state_dim();
        assert_eq!(x.len(), 2 * d, "flat phase vector has wrong dimension");
        let (s, p) = x.split_at(d);
        let mut out = self.potential_gradient(s);
        out.extend_from_slice(p);
        out
    }
}

/// The discrete policy operator G(x) = x + Δt·S∇g(x).
pub struct DynamicsOperator<'a> {
    dt: f64,
    score: &'a dyn ScoreFunction,
}

impl<'a> DynamicsOperator<'a> {
    /// `dt = 0` is allowed and makes the operator the identity map.
    pub fn new(dt: f64, score: &'a dyn ScoreFunction) -> Self {
        assert!(dt.is_finite() && dt >= 0.0, "step size must be finite and nonnegative");
        Self { dt, score }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn score(&self) -> &dyn ScoreFunction {
        self.score
    }

    /// One application of G.
    pub fn step(&self, x: &PhasePoint) -> Result<PhasePoint, DynamicsError> {
        if self.dt == 0.0 {
            return Ok(x.clone());
        }
        let flat = x.to_flat();
        let grad = self.score.gradient(&flat);
        if grad.iter().any(|v| !v.is_finite()) {
            let head = flat.iter().take(4).copied().collect();
            return Err(DynamicsError::NonFiniteGradient { head });
        }
        let sg = symplectic_apply(&grad)?;
        let d = x.state_dim();
        let s = x.s.iter().zip(&sg[..d]).map(|(v, g)| v + self.dt * g).collect();
        let p = x.p.iter().zip(&sg[d..]).map(|(v, g)| v + self.dt * g).collect();
        Ok(PhasePoint::new(s, p))
    }

    /// The trajectory [x0, G(x0), …, G^(H−1)(x0)] of length `horizon`.
    pub fn rollout(&self, x0: &PhasePoint, horizon: usize) -> Result<Vec<PhasePoint>, DynamicsError> {
        assert!(horizon >= 1, "a trajectory contains at least its start");
        let mut points = Vec::with_capacity(horizon);
        points.push(x0.clone());
        for index in 1..horizon {
            let next = self
                .step(points.last().expect("nonempty"))
                .map_err(|source| DynamicsError::RolloutFailed { index, source: Box::new(source) })?;
            points.push(next);
        }
        Ok(points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn symplectic_apply_reference_pairs() {
        assert_eq!(symplectic_apply(&[1.0, 0.0]).unwrap(), vec![0.0, -1.0]);
        assert_eq!(symplectic_apply(&[0.0, 1.0]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(symplectic_apply(&[2.0, 3.0]).unwrap(), vec![3.0, -2.0]);
    }

    #[test]
    fn symplectic_apply_rejects_odd_dimension() {
        assert!(matches!(symplectic_apply(&[1.0, 2.0, 3.0]), Err(DynamicsError::OddDimension { dim: 3 })));
    }

    #[test]
    fn symplectic_squared_is_minus_identity() {
        let mut rng = crate::rng::stream(31, "dynamics-test", 0);
        for _ in 0..50 {
            let d = 2 * rng.gen_range(1..6);
            let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let twice = symplectic_apply(&symplectic_apply(&v).unwrap()).unwrap();
            for (a, b) in twice.iter().zip(&v) {
                assert_eq!(*a, -b, "S² must equal −I exactly");
            }
        }
    }

    #[test]
    fn step_free_particle() {
        let h = AnalyticHamiltonian::FreeParticle { state_dim: 1 };
        let op = DynamicsOperator::new(0.01, &h);
        let next = op.step(&PhasePoint::new(vec![0.0], vec![1.0])).unwrap();
        assert!((next.s[0] - 0.01).abs() < 1e-15);
        assert!((next.p[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn step_harmonic_once_and_twice() {
        let h = AnalyticHamiltonian::Harmonic { state_dim: 1 };
        let op = DynamicsOperator::new(0.01, &h);
        let x1 = op.step(&PhasePoint::new(vec![1.0], vec![0.0])).unwrap();
        assert!((x1.s[0] - 1.0).abs() < 1e-15);
        assert!((x1.p[0] + 0.01).abs() < 1e-15);
        let x2 = op.step(&x1).unwrap();
        // Matrix [[1, dt], [−dt, 1]] squared applied to (1, 0).
        assert!((x2.s[0] - 0.9999).abs() < 1e-12);
        assert!((x2.p[0] + 0.02).abs() < 1e-12);
    }

    #[test]
    fn step_with_zero_dt_is_identity_bitwise() {
        let h = AnalyticHamiltonian::Harmonic { state_dim: 2 };
        let op = DynamicsOperator::new(0.0, &h);
        let x = PhasePoint::new(vec![1.5, -0.25], vec![0.125, 3.0]);
        let y = op.step(&x).unwrap();
        assert!(x.s.iter().zip(&y.s).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(x.p.iter().zip(&y.p).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn rollout_prefix_and_drift() {
        let h = AnalyticHamiltonian::FreeParticle { state_dim: 1 };
        let op = DynamicsOperator::new(0.1, &h);
        let x0 = PhasePoint::new(vec![0.0], vec![1.0]);
        let single = op.rollout(&x0, 1).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0], x0);
        let traj = op.rollout(&x0, 3).unwrap();
        let s: Vec<f64> = traj.iter().map(|x| x.s[0]).collect();
        for (got, want) in s.iter().zip([0.0, 0.1, 0.2]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn rollout_entries_match_repeated_step() {
        let h = AnalyticHamiltonian::Harmonic { state_dim: 2 };
        let op = DynamicsOperator::new(0.05, &h);
        let x0 = PhasePoint::new(vec![1.0, -0.5], vec![0.25, 0.75]);
        let traj = op.rollout(&x0, 10).unwrap();
        let mut x = x0;
        for point in &traj {
            assert!(point.s.iter().zip(&x.s).all(|(a, b)| a.to_bits() == b.to_bits()));
            x = op.step(&x).unwrap();
        }
    }

    #[test]
    fn harmonic_rollout_matches_matrix_power() {
        let h = AnalyticHamiltonian::Harmonic { state_dim: 1 };
        let dt = 0.01;
        let op = DynamicsOperator::new(dt, &h);
        let traj = op.rollout(&PhasePoint::new(vec![1.0], vec![0.0]), 21).unwrap();
        // Independent oracle: explicit powers of [[1, dt], [−dt, 1]].
        let (mut a, mut b, mut c, mut d) = (1.0f64, 0.0f64, 0.0f64, 1.0f64);
        for (n, point) in traj.iter().enumerate() {
            let s = a * 1.0 + b * 0.0;
            let p = c * 1.0 + d * 0.0;
            assert!((point.s[0] - s).abs() < 1e-12, "s mismatch at n={n}");
            assert!((point.p[0] - p).abs() < 1e-12, "p mismatch at n={n}");
            let (na, nb) = (a + dt * c, b + dt * d);
            let (nc, nd) = (c - dt * a, d - dt * b);
            (a, b, c, d) = (na, nb, nc, nd);
        }
    }

    #[test]
    fn one_step_error_shrinks_first_order_with_dt() {
        // ‖step(x) − flow(x, dt)‖ ≤ C·dt²: halving dt must reduce the error
        // by ≥ 3.9× each time.
        let h = AnalyticHamiltonian::Harmonic { state_dim: 1 };
        let x0 = PhasePoint::new(vec![1.0], vec![0.0]);
        let mut dt = 0.02;
        let mut prev_err = f64::INFINITY;
        for halving in 0..4 {
            let op = DynamicsOperator::new(dt, &h);
            let stepped = op.step(&x0).unwrap();
            let exact = h.flow(&x0, dt);
            let err = stepped.distance(&exact);
            if halving > 0 {
                assert!(prev_err / err >= 3.9, "halving {halving}: ratio {}", prev_err / err);
            }
            prev_err = err;
            dt *= 0.5;
        }
    }

    #[test]
    fn harmonic_energy_drift_stays_below_half_percent() {
        // Explicit Euler grows harmonic energy by (1 + dt²) per step; at
        // dt = 0.01 over 20 steps the drift stays well under 0.5%.
        let h = AnalyticHamiltonian::Harmonic { state_dim: 1 };
        let op = DynamicsOperator::new(0.01, &h);
        let x0 = PhasePoint::new(vec![1.0], vec![0.0]);
        let h0 = h.value(&x0.to_flat());
        for (n, point) in op.rollout(&x0, 21).unwrap().iter().enumerate() {
            let drift = (h.value(&point.to_flat()) - h0).abs() / h0;
            assert!(drift < 0.005, "energy drift {drift} at step {n}");
        }
    }

    #[test]
    fn analytic_flows_reference_values() {
        let free = AnalyticHamiltonian::FreeParticle { state_dim: 1 };
        let x = free.flow(&PhasePoint::new(vec![0.0], vec![1.0]), 1.0);
        assert!((x.s[0] - 1.0).abs() < 1e-15 && (x.p[0] - 1.0).abs() < 1e-15);

        let harm = AnalyticHamiltonian::Harmonic { state_dim: 1 };
        let quarter = harm.flow(&PhasePoint::new(vec![1.0], vec![0.0]), std::f64::consts::FRAC_PI_2);
        assert!(quarter.s[0].abs() < 1e-15);
        assert!((quarter.p[0] + 1.0).abs() < 1e-15);
        let small = harm.flow(&PhasePoint::new(vec![1.0], vec![0.0]), 0.2);
        assert!((small.s[0] - 0.98007).abs() < 1e-5);
        assert!((small.p[0] + 0.19867).abs() < 1e-5);
    }

    #[test]
    fn quadratic_flow_reduces_to_harmonic_for_identity_matrix() {
        let quad = AnalyticHamiltonian::Quadratic { matrix: SpdMatrix::identity(2) };
        let harm = AnalyticHamiltonian::Harmonic { state_dim: 2 };
        let x0 = PhasePoint::new(vec![0.3, -1.1], vec![0.7, 0.2]);
        for &t in &[0.1, 0.7, 2.5] {
            let a = quad.flow(&x0, t);
            let b = harm.flow(&x0, t);
            assert!(a.distance(&b) < 1e-12, "flows disagree at t={t}");
        }
    }

    #[test]
    fn quadratic_flow_conserves_energy() {
        let matrix = SpdMatrix::new(vec![vec![2.0, 0.4], vec![0.4, 1.0]]).unwrap();
        let quad = AnalyticHamiltonian::Quadratic { matrix };
        let x0 = PhasePoint::new(vec![1.0, -0.5], vec![0.25, 0.5]);
        let e0 = quad.value(&x0.to_flat());
        for &t in &[0.3, 1.0, 4.0, 10.0] {
            let xt = quad.flow(&x0, t);
            let et = quad.value(&xt.to_flat());
            assert!((et - e0).abs() < 1e-10, "energy not conserved at t={t}: {e0} vs {et}");
        }
    }

    #[test]
    fn quadratic_flow_satisfies_equation_of_motion() {
        // d²s/dt² = −A s, checked by central differences on the flow.
        let matrix = SpdMatrix::new(vec![vec![1.5, -0.3], vec![-0.3, 0.8]]).unwrap();
        let quad = AnalyticHamiltonian::Quadratic { matrix: matrix.clone() };
        let x0 = PhasePoint::new(vec![0.6, -0.2], vec![-0.1, 0.9]);
        let t = 0.8;
        let h = 1e-4;
        let plus = quad.flow(&x0, t + h);
        let mid = quad.flow(&x0, t);
        let minus = quad.flow(&x0, t - h);
        let want = matrix.mul(&mid.s);
        for i in 0..2 {
            let acc = (plus.s[i] - 2.0 * mid.s[i] + minus.s[i]) / (h * h);
            assert!((acc + want[i]).abs() < 1e-5, "equation of motion violated in coordinate {i}");
        }
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut rng = crate::rng::stream(32, "dynamics-test", 1);
        let matrix = SpdMatrix::new(vec![vec![2.0, 0.5], vec![0.5, 1.2]]).unwrap();
        let hams: Vec<AnalyticHamiltonian> = vec![
            AnalyticHamiltonian::FreeParticle { state_dim: 2 },
            AnalyticHamiltonian::Harmonic { state_dim: 2 },
            AnalyticHamiltonian::Quadratic { matrix },
        ];
        for ham in &hams {
            for _ in 0..10 {
                let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let grad = ham.gradient(&x);
                let h = 1e-6;
                for i in 0..4 {
                    let mut xp = x.clone();
                    xp[i] += h;
                    let mut xm = x.clone();
                    xm[i] -= h;
                    let fd = (ham.value(&xp) - ham.value(&xm)) / (2.0 * h);
                    assert!((grad[i] - fd).abs() < 1e-8, "gradient mismatch in coordinate {i}");
                }
            }
        }
    }

    #[test]
    fn score_energy_reference_values() {
        assert_eq!(score_energy(ScoreForm::Legendre, &[0.0, 0.0], 12.5), 12.5);
        assert_eq!(score_energy(ScoreForm::Legendre, &[1.0, 1.0], 0.0), 1.0);
        // F(s) = ½‖s‖² at s = (3,4) is 12.5; kinetic at p = (1,0) is 0.5.
        assert_eq!(score_energy(ScoreForm::Legendre, &[1.0, 0.0], 12.5), 13.0);
        // The printed form discards the kinetic term entirely.
        assert_eq!(score_energy(ScoreForm::CostOnly, &[1.0, 0.0], 12.5), 12.5);
    }

    #[test]
    fn net_backed_operator_moves_phase_points() {
        // A linear score g(x) = w·x has constant gradient w, so the operator
        // translates by dt·S w.
        let net = crate::net::ScoreNet::from_parts(
            vec![4, 1],
            vec![vec![1.0, 2.0, 3.0, 4.0]],
            vec![vec![0.0]],
            crate::net::Activation::Tanh,
        )
        .unwrap();
        let op = DynamicsOperator::new(0.5, &net);
        let x = PhasePoint::zeros(2);
        let y = op.step(&x).unwrap();
        assert_eq!(y.s, vec![1.5, 2.0]); // dt · (∂g/∂p) = 0.5·(3,4)
        assert_eq!(y.p, vec![-0.5, -1.0]); // −dt · (∂g/∂s) = −0.5·(1,2)
    }
}
