//! Analytic quadratic environment: F(s) = ½ sᵀA s with symmetric
//! positive-definite A. The induced dynamics have a closed-form flow, which
//! makes this environment the oracle for convergence and regret diagnostics.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::envs::EnvError;
use crate::linalg::SpdMatrix;

#[derive(Debug, Clone)]
pub struct QuadraticEnv {
    matrix: SpdMatrix,
}

impl QuadraticEnv {
    pub fn new(matrix: SpdMatrix) -> Self {
        Self { matrix }
    }

    pub fn identity(dim: usize) -> Self {
        Self { matrix: SpdMatrix::identity(dim) }
    }

    pub fn matrix(&self) -> &SpdMatrix {
        &self.matrix
    }

    pub fn state_dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn cost(&self, state: &[f64]) -> Result<f64, EnvError> {
        if state.iter().any(|v| !v.is_finite()) {
            return Err(EnvError::NonFiniteState);
        }
        Ok(0.5 * self.matrix.quad_form(state))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.state_dim()).map(|_| rng.sample(StandardNormal)).collect()
    }
}
