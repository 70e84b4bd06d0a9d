//! Phase-space points: the composite vector x = (s, p) of state and adjoint.

use serde::{Deserialize, Serialize};

/// A point on phase space. The adjoint has the same dimension as the state
/// (the action is identified with the adjoint under energy-regularized
/// rewards), so the full dimension is even.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub s: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhasePoint {
    pub fn new(s: Vec<f64>, p: Vec<f64>) -> Self {
        assert_eq!(s.len(), p.len(), "state and adjoint must have equal dimension");
        Self { s, p }
    }

    /// Start at state `s` with zero adjoint (the trainer's initial condition).
    pub fn from_state(s: Vec<f64>) -> Self {
        let p = vec![0.0; s.len()];
        Self { s, p }
    }

    pub fn zeros(state_dim: usize) -> Self {
        Self { s: vec![0.0; state_dim], p: vec![0.0; state_dim] }
    }

    pub fn state_dim(&self) -> usize {
        self.s.len()
    }

    /// Full phase dimension d = d_S + d_A.
    pub fn dim(&self) -> usize {
        2 * self.s.len()
    }

    /// Concatenate (s, p) into one flat vector.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        out.extend_from_slice(&self.s);
        out.extend_from_slice(&self.p);
        out
    }

    /// Write (s, p) into a preallocated flat buffer of length `dim()`.
    pub fn write_flat(&self, out: &mut [f64]) {
        let d = self.s.len();
        assert_eq!(out.len(), 2 * d, "flat buffer must have the phase dimension");
        out[..d].copy_from_slice(&self.s);
        out[d..].copy_from_slice(&self.p);
    }

    /// Split a flat phase vector back into (s, p).
    pub fn from_flat(x: &[f64]) -> Self {
        assert!(x.len().is_multiple_of(2), "flat phase vector must have even length");
        let d = x.len() / 2;
        Self { s: x[..d].to_vec(), p: x[d..].to_vec() }
    }

    pub fn is_finite(&self) -> bool {
        self.s.iter().chain(self.p.iter()).all(|v| v.is_finite())
    }

    /// Euclidean distance ‖self − other‖ over the full phase vector.
    pub fn distance(&self, other: &PhasePoint) -> f64 {
        assert_eq!(self.dim(), other.dim(), "phase dimensions must match");
        self.s
            .iter()
            .zip(&other.s)
            .chain(self.p.iter().zip(&other.p))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}
