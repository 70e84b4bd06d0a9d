//! Bicubic grid refinement and the fine-grid total-variation cost.
//!
//! A coarse m×m field on the unit square is interpolated to a fine grid by a
//! tensor product of one-dimensional not-a-knot cubic splines (rows first,
//! then columns). The fine grid places `ff` subdivisions in every coarse
//! cell, i.e. `(m−1)·ff + 1` nodes per side, so every coarse node coincides
//! with a fine node exactly.
//!
//! The cost is ∫|∇f| dx / √(∫f dx) evaluated on the fine grid: discrete
//! gradients by central differences (one-sided at the boundary) and both
//! integrals by tensor-product trapezoidal weights, which makes the cost
//! exact for affine fields. The denominator integrand is clamped below at 0
//! and the integral must exceed 1e-6.

use crate::envs::EnvError;
use crate::linalg::solve_tridiagonal;

/// Positivity floor for the denominator integral.
pub const DENOMINATOR_FLOOR: f64 = 1e-6;

/// One-dimensional cubic interpolant on uniform nodes 0..m−1 with not-a-knot
/// ends (for m = 3 the unique parabola through the three points).
#[derive(Debug, Clone)]
pub enum Spline1d {
    Cubic { y: Vec<f64>, m2: Vec<f64> },
    Quadratic { y: Vec<f64> },
}

/// Second derivatives of the not-a-knot cubic spline on uniform unit-spaced
/// nodes. Requires m ≥ 4.
///
/// With unit spacing the not-a-knot conditions (third-derivative continuity
/// at the second and second-to-last knots) force M₁ and M_{m−2} to equal the
/// central second differences there; the remaining interior equations form a
/// strictly diagonally dominant tridiagonal system.
pub fn not_a_knot_second_derivs(y: &[f64]) -> Result<Vec<f64>, EnvError> {
    let m = y.len();
    assert!(m >= 4, "not-a-knot spline needs at least 4 nodes");
    let d2 = |i: usize| y[i - 1] - 2.0 * y[i] + y[i + 1];
    let mut m2 = vec![0.0; m];
    m2[1] = d2(1);
    m2[m - 2] = d2(m - 2);
    if m > 5 {
        // Interior unknowns M_2..M_{m-3}: M_{i-1} + 4 M_i + M_{i+1} = 6·δ²y_i.
        let k = m - 4;
        let a = vec![1.0; k];
        let b = vec![4.0; k];
        let c = vec![1.0; k];
        let mut d: Vec<f64> = (2..m - 2).map(|i| 6.0 * d2(i)).collect();
        d[0] -= m2[1];
        d[k - 1] -= m2[m - 2];
        let inner = solve_tridiagonal(&a, &b, &c, &d).map_err(|e| EnvError::Numeric(e.to_string()))?;
        m2[2..m - 2].copy_from_slice(&inner);
    } else if m == 5 {
        // Single interior unknown: M_1 + 4 M_2 + M_3 = 6·δ²y_2.
        m2[2] = (6.0 * d2(2) - m2[1] - m2[3]) / 4.0;
    }
    // Not-a-knot extrapolation of the end second derivatives.
    m2[0] = 2.0 * m2[1] - m2[2];
    m2[m - 1] = 2.0 * m2[m - 2] - m2[m - 3];
    Ok(m2)
}

impl Spline1d {
    pub fn fit(y: &[f64]) -> Result<Self, EnvError> {
        match y.len() {
            0..=2 => Err(EnvError::Config(format!("1-D spline needs at least 3 nodes, got {}", y.len()))),
            3 => Ok(Spline1d::Quadratic { y: y.to_vec() }),
            _ => Ok(Spline1d::Cubic { y: y.to_vec(), m2: not_a_knot_second_derivs(y)? }),
        }
    }

    /// Interpolant at `t ∈ [0, m−1]`. Integer parameters reproduce the node
    /// values bitwise.
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Spline1d::Quadratic { y } => {
                if t == 0.0 {
                    return y[0];
                }
                if t == 1.0 {
                    return y[1];
                }
                if t == 2.0 {
                    return y[2];
                }
                // Lagrange parabola through (0, y0), (1, y1), (2, y2).
                y[0] * (t - 1.0) * (t - 2.0) / 2.0 - y[1] * t * (t - 2.0) + y[2] * t * (t - 1.0) / 2.0
            }
            Spline1d::Cubic { y, m2 } => {
                let m = y.len();
                let clamped = t.clamp(0.0, (m - 1) as f64);
                let mut i = clamped.floor() as usize;
                if i >= m - 1 {
                    i = m - 2;
                }
                let u = clamped - i as f64;
                if u == 0.0 {
                    return y[i];
                }
                if u == 1.0 {
                    return y[i + 1];
                }
                let v = 1.0 - u;
                v * y[i] + u * y[i + 1] + ((v * v * v - v) * m2[i] + (u * u * u - u) * m2[i + 1]) / 6.0
            }
        }
    }
}

/// Bicubic refinement: interpolate an m×m coarse field (row-major) onto the
/// fine grid with `(m−1)·ff + 1` nodes per side.
pub fn grid_refine(coarse: &[f64], m: usize, fine_factor: usize) -> Result<Vec<f64>, EnvError> {
    if m < 3 {
        return Err(EnvError::Config(format!("coarse grid must be at least 3×3, got {m}×{m}")));
    }
    if fine_factor < 2 {
        return Err(EnvError::Config(format!("fine factor must be at least 2, got {fine_factor}")));
    }
    if coarse.len() != m * m {
        return Err(EnvError::DimMismatch { expected: m * m, got: coarse.len() });
    }
    if coarse.iter().any(|v| !v.is_finite()) {
        return Err(EnvError::NonFiniteState);
    }
    let fine_n = (m - 1) * fine_factor + 1;
    let ts: Vec<f64> = (0..fine_n).map(|j| j as f64 / fine_factor as f64).collect();

    // Pass 1: refine every coarse row to fine columns (m × fine_n).
    let mut rows = vec![0.0; m * fine_n];
    for r in 0..m {
        let spline = Spline1d::fit(&coarse[r * m..(r + 1) * m])?;
        for (j, &t) in ts.iter().enumerate() {
            rows[r * fine_n + j] = spline.eval(t);
        }
    }

    // Pass 2: refine every intermediate column to fine rows (fine_n × fine_n).
    let mut fine = vec![0.0; fine_n * fine_n];
    let mut column = vec![0.0; m];
    for c in 0..fine_n {
        for r in 0..m {
            column[r] = rows[r * fine_n + c];
        }
        let spline = Spline1d::fit(&column)?;
        for (i, &t) in ts.iter().enumerate() {
            fine[i * fine_n + c] = spline.eval(t);
        }
    }
    Ok(fine)
}

/// Number of fine nodes per side produced by [`grid_refine`].
pub fn fine_side(m: usize, fine_factor: usize) -> usize {
    (m - 1) * fine_factor + 1
}

/// Total-variation-over-√mass cost of the refined field.
pub fn grid_cost(coarse: &[f64], m: usize, fine_factor: usize) -> Result<f64, EnvError> {
    let fine = grid_refine(coarse, m, fine_factor)?;
    let n = fine_side(m, fine_factor);
    let h = 1.0 / (n - 1) as f64;
    let trap = |k: usize| if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
    let mut numerator = 0.0;
    let mut denominator = 0.0;
    for i in 0..n {
        for j in 0..n {
            let f = fine[i * n + j];
            let gx = if j == 0 {
                (fine[i * n + 1] - f) / h
            } else if j == n - 1 {
                (f - fine[i * n + n - 2]) / h
            } else {
                (fine[i * n + j + 1] - fine[i * n + j - 1]) / (2.0 * h)
            };
            let gy = if i == 0 {
                (fine[n + j] - f) / h
            } else if i == n - 1 {
                (f - fine[(n - 2) * n + j]) / h
            } else {
                (fine[(i + 1) * n + j] - fine[(i - 1) * n + j]) / (2.0 * h)
            };
            let weight = trap(i) * trap(j) * h * h;
            numerator += weight * (gx * gx + gy * gy).sqrt();
            denominator += weight * f.max(0.0);
        }
    }
    if denominator <= DENOMINATOR_FLOOR {
        return Err(EnvError::DegenerateField { integral: denominator });
    }
    Ok(numerator / denominator.sqrt())
}
