//! Small dense linear algebra kernels.
//!
//! Everything here serves a specific consumer: the tridiagonal solvers back
//! the cubic-spline fits in the environments, and the Jacobi eigen-solver
//! backs the analytic flow of quadratic Hamiltonians. Matrices are tiny
//! (spline systems of a few dozen rows, SPD matrices of a few dimensions), so
//! plain `Vec<f64>` kernels are entirely adequate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("tridiagonal solve hit a near-zero pivot at row {row} (|pivot| = {pivot:.3e})")]
    SingularPivot { row: usize, pivot: f64 },
    #[error("system has {rows} rows; at least {min} required")]
    TooSmall { rows: usize, min: usize },
    #[error("matrix is not symmetric: |a[{i}][{j}] - a[{j}][{i}]| = {diff:.3e}")]
    NotSymmetric { i: usize, j: usize, diff: f64 },
    #[error("matrix is not positive definite: eigenvalue {index} is {value:.6e}")]
    NotPositiveDefinite { index: usize, value: f64 },
    #[error("Jacobi eigen-solver did not converge in {sweeps} sweeps (off-diagonal norm {offdiag:.3e})")]
    NoConvergence { sweeps: usize, offdiag: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
}

const PIVOT_EPS: f64 = 1e-300;

/// Solve a tridiagonal system with the Thomas algorithm.
///
/// Row `i` reads `a[i]·x[i-1] + b[i]·x[i] + c[i]·x[i+1] = d[i]`, with `a[0]`
/// and `c[n-1]` ignored. All four slices must have the same length.
pub fn solve_tridiagonal(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let n = b.len();
    if n < 1 {
        return Err(LinalgError::TooSmall { rows: n, min: 1 });
    }
    assert!(a.len() == n && c.len() == n && d.len() == n, "slice lengths must agree");
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    let mut pivot = b[0];
    if pivot.abs() < PIVOT_EPS {
        return Err(LinalgError::SingularPivot { row: 0, pivot });
    }
    cp[0] = c[0] / pivot;
    dp[0] = d[0] / pivot;
    for i in 1..n {
        pivot = b[i] - a[i] * cp[i - 1];
        if pivot.abs() < PIVOT_EPS {
            return Err(LinalgError::SingularPivot { row: i, pivot });
        }
        cp[i] = c[i] / pivot;
        dp[i] = (d[i] - a[i] * dp[i - 1]) / pivot;
    }
    let mut x = dp;
    for i in (0..n - 1).rev() {
        x[i] -= cp[i] * x[i + 1];
    }
    Ok(x)
}

/// Solve a cyclic tridiagonal system via the Sherman–Morrison correction.
///
/// Row `i` reads `a[i]·x[(i-1) mod n] + b[i]·x[i] + c[i]·x[(i+1) mod n] = d[i]`,
/// so `a[0]` couples to `x[n-1]` and `c[n-1]` couples to `x[0]`. Requires
/// `n >= 3` (smaller periodic systems degenerate to overlapping couplings).
pub fn solve_cyclic_tridiagonal(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let n = b.len();
    if n < 3 {
        return Err(LinalgError::TooSmall { rows: n, min: 3 });
    }
    assert!(a.len() == n && c.len() == n && d.len() == n, "slice lengths must agree");
    let beta = a[0]; // wrap-around coupling in row 0
    let alpha = c[n - 1]; // wrap-around coupling in row n-1
    let gamma = -b[0];
    // Modified (ordinary) tridiagonal matrix A' = A - u vᵀ with
    // u = (gamma, 0, …, 0, alpha)ᵀ and v = (1, 0, …, 0, beta/gamma)ᵀ.
    let mut b_mod = b.to_vec();
    b_mod[0] = b[0] - gamma;
    b_mod[n - 1] = b[n - 1] - alpha * beta / gamma;
    let x = solve_tridiagonal(a, &b_mod, c, d)?;
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = alpha;
    let z = solve_tridiagonal(a, &b_mod, c, &u)?;
    let vx = x[0] + beta / gamma * x[n - 1];
    let vz = z[0] + beta / gamma * z[n - 1];
    let denom = 1.0 + vz;
    if denom.abs() < PIVOT_EPS {
        return Err(LinalgError::SingularPivot { row: 0, pivot: denom });
    }
    let factor = vx / denom;
    Ok(x.iter().zip(&z).map(|(xi, zi)| xi - factor * zi).collect())
}

/// Eigen-decompose a symmetric matrix with the cyclic Jacobi method.
///
/// Returns `(eigenvalues, eigenvectors)` where `eigenvectors[j]` is the unit
/// eigenvector paired with `eigenvalues[j]`, sorted ascending. Convergence is
/// declared when the off-diagonal Frobenius norm drops below `1e-14` times the
/// matrix scale.
pub fn jacobi_eigen(matrix: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>), LinalgError> {
    let n = matrix.len();
    if n == 0 {
        return Err(LinalgError::TooSmall { rows: 0, min: 1 });
    }
    let scale = matrix
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |m, &v| m.max(v.abs()))
        .max(1e-300);
    for i in 0..n {
        assert_eq!(matrix[i].len(), n, "matrix must be square");
        for j in (i + 1)..n {
            let diff = (matrix[i][j] - matrix[j][i]).abs();
            if diff > 1e-9 * scale {
                return Err(LinalgError::NotSymmetric { i, j, diff });
            }
        }
    }
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    // Symmetrize exactly so rotations keep the matrix symmetric to roundoff.
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[i][j] + a[j][i]);
            a[i][j] = m;
            a[j][i] = m;
        }
    }
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let off = |a: &Vec<Vec<f64>>| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i][j] * a[i][j];
                }
            }
        }
        s.sqrt()
    };
    const MAX_SWEEPS: usize = 64;
    let tol = 1e-14 * scale;
    let mut sweeps = 0;
    while off(&a) > tol {
        if sweeps >= MAX_SWEEPS {
            return Err(LinalgError::NoConvergence { sweeps, offdiag: off(&a) });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() <= tol / (n as f64) {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let cos = 1.0 / (t * t + 1.0).sqrt();
                let sin = t * cos;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = cos * akp - sin * akq;
                    a[k][q] = sin * akp + cos * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = cos * apk - sin * aqk;
                    a[q][k] = sin * apk + cos * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = cos * vkp - sin * vkq;
                    row[q] = sin * vkp + cos * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i][i].partial_cmp(&a[j][j]).expect("eigenvalues are finite"));
    let eigvals: Vec<f64> = order.iter().map(|&j| a[j][j]).collect();
    let eigvecs: Vec<Vec<f64>> = order.iter().map(|&j| (0..n).map(|i| v[i][j]).collect()).collect();
    Ok((eigvals, eigvecs))
}

/// A validated symmetric positive-definite matrix with a cached
/// eigen-decomposition, used for quadratic potentials `F(s) = ½ sᵀA s` and
/// their analytic Hamiltonian flows.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    entries: Vec<Vec<f64>>,
    eigvals: Vec<f64>,
    eigvecs: Vec<Vec<f64>>,
}

impl SpdMatrix {
    /// Validate symmetry and positive definiteness, caching the decomposition.
    pub fn new(entries: Vec<Vec<f64>>) -> Result<Self, LinalgError> {
        let (eigvals, eigvecs) = jacobi_eigen(&entries)?;
        if let Some((index, &value)) = eigvals.iter().enumerate().find(|(_, &v)| v <= 0.0) {
            return Err(LinalgError::NotPositiveDefinite { index, value });
        }
        Ok(Self { entries, eigvals, eigvecs })
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![1.0; dim]).expect("identity is SPD")
    }

    pub fn diagonal(values: &[f64]) -> Result<Self, LinalgError> {
        let n = values.len();
        let mut entries = vec![vec![0.0; n]; n];
        for (i, &v) in values.iter().enumerate() {
            entries[i][i] = v;
        }
        Self::new(entries)
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[Vec<f64>] {
        &self.entries
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigvals
    }

    /// Matrix-vector product `A x`.
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim(), "vector length must match matrix dimension");
        self.entries.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    /// Quadratic form `xᵀ A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.mul(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Coordinates of `x` in the eigenbasis (`Vᵀ x`).
    pub fn to_eigenbasis(&self, x: &[f64]) -> Vec<f64> {
        self.eigvecs.iter().map(|v| v.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    /// Reassemble a vector from eigenbasis coordinates (`V y`).
    pub fn from_eigenbasis(&self, y: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x = vec![0.0; n];
        for (coeff, vec) in y.iter().zip(&self.eigvecs) {
            for (xi, vi) in x.iter_mut().zip(vec) {
                *xi += coeff * vi;
            }
        }
        x
    }
}
