//! Closed-curve geometry: periodic cubic splines, arc-length/area quadrature,
//! and polyline fallbacks.
//!
//! Control points are interpolated by a periodic (closed) cubic spline with
//! uniform parameterization (knot i at parameter t = i, unit spacing). The
//! spline's second derivatives at the knots solve a cyclic tridiagonal
//! system; perimeter and enclosed signed area are then computed by composite
//! Simpson quadrature of the arc-length and Green's-theorem integrands, with
//! the sample density doubled until both integrals stabilize.

use crate::envs::EnvError;
use crate::linalg::solve_cyclic_tridiagonal;

/// A closed cubic spline through `n ≥ 4` planar control points.
#[derive(Debug, Clone)]
pub struct ClosedSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivatives of each coordinate at the knots.
    mx: Vec<f64>,
    my: Vec<f64>,
}

/// Result of the adaptive quadrature over a closed spline.
#[derive(Debug, Clone, Copy)]
pub struct CurveMeasure {
    pub perimeter: f64,
    pub signed_area: f64,
    /// Number of quadrature samples at which the values stabilized.
    pub samples: usize,
    pub converged: bool,
}

fn periodic_second_derivs(values: &[f64]) -> Result<Vec<f64>, EnvError> {
    let n = values.len();
    // Row i: M_{i-1} + 4 M_i + M_{i+1} = 6 (y_{i-1} - 2 y_i + y_{i+1}), cyclically.
    let a = vec![1.0; n];
    let b = vec![4.0; n];
    let c = vec![1.0; n];
    let d: Vec<f64> = (0..n)
        .map(|i| {
            let prev = values[(i + n - 1) % n];
            let next = values[(i + 1) % n];
            6.0 * (prev - 2.0 * values[i] + next)
        })
        .collect();
    solve_cyclic_tridiagonal(&a, &b, &c, &d).map_err(|e| EnvError::Numeric(e.to_string()))
}

impl ClosedSpline {
    pub fn fit(points: &[(f64, f64)]) -> Result<Self, EnvError> {
        if points.len() < 4 {
            return Err(EnvError::Config(format!("a closed spline needs at least 4 control points, got {}", points.len())));
        }
        if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(EnvError::NonFiniteState);
        }
        let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
        let mx = periodic_second_derivs(&xs)?;
        let my = periodic_second_derivs(&ys)?;
        Ok(Self { xs, ys, mx, my })
    }

    pub fn knot_count(&self) -> usize {
        self.xs.len()
    }

    fn segment(&self, t: f64) -> (usize, usize, f64) {
        let n = self.xs.len() as f64;
        let wrapped = t.rem_euclid(n);
        let mut i = wrapped.floor() as usize;
        if i >= self.xs.len() {
            i = 0;
        }
        let u = wrapped - i as f64;
        (i, (i + 1) % self.xs.len(), u)
    }

    /// Point on the curve at parameter `t` (unit knot spacing, period n).
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let (i, j, u) = self.segment(t);
        if u == 0.0 {
            return (self.xs[i], self.ys[i]);
        }
        let v = 1.0 - u;
        let cu = (u * u * u - u) / 6.0;
        let cv = (v * v * v - v) / 6.0;
        (
            v * self.xs[i] + u * self.xs[j] + cv * self.mx[i] + cu * self.mx[j],
            v * self.ys[i] + u * self.ys[j] + cv * self.my[i] + cu * self.my[j],
        )
    }

    /// Tangent d/dt of the curve at parameter `t`.
    pub fn derivative(&self, t: f64) -> (f64, f64) {
        let (i, j, u) = self.segment(t);
        let v = 1.0 - u;
        let cu = (3.0 * u * u - 1.0) / 6.0;
        let cv = (1.0 - 3.0 * v * v) / 6.0;
        (
            self.xs[j] - self.xs[i] + cv * self.mx[i] + cu * self.mx[j],
            self.ys[j] - self.ys[i] + cv * self.my[i] + cu * self.my[j],
        )
    }

    /// Composite Simpson quadrature of perimeter and signed area with `samples`
    /// intervals (must be even) over one period.
    fn measure_at(&self, samples: usize) -> (f64, f64) {
        debug_assert!(samples.is_multiple_of(2) && samples >= 2);
        let n = self.xs.len() as f64;
        let dt = n / samples as f64;
        let mut perimeter = 0.0;
        let mut area = 0.0;
        for k in 0..=samples {
            let t = k as f64 * dt;
            let (x, y) = self.eval(t);
            let (dx, dy) = self.derivative(t);
            let weight = if k == 0 || k == samples {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            perimeter += weight * (dx * dx + dy * dy).sqrt();
            area += weight * 0.5 * (x * dy - y * dx);
        }
        (perimeter * dt / 3.0, area * dt / 3.0)
    }

    /// Adaptive quadrature: start near `base_samples` (rounded to an even
    /// per-segment count) and double until perimeter and area both change by
    /// less than `tol`, with a hard cap of four doublings.
    pub fn measure(&self, base_samples: usize, tol: f64) -> CurveMeasure {
        let n = self.xs.len();
        let per_seg = (base_samples.div_ceil(n)).next_multiple_of(2).max(2);
        let mut samples = n * per_seg;
        let (mut perimeter, mut area) = self.measure_at(samples);
        for _ in 0..4 {
            let next = samples * 2;
            let (p2, a2) = self.measure_at(next);
            let stable = (p2 - perimeter).abs() < tol && (a2 - area).abs() < tol;
            perimeter = p2;
            area = a2;
            samples = next;
            if stable {
                return CurveMeasure { perimeter, signed_area: area, samples, converged: true };
            }
        }
        CurveMeasure { perimeter, signed_area: area, samples, converged: false }
    }
}

/// Perimeter of the closed polygon through `points` (straight edges).
pub fn polyline_perimeter(points: &[(f64, f64)]) -> f64 {
    let n = points.len();
    (0..n)
        .map(|i| {
            let (x0, y0) = points[i];
            let (x1, y1) = points[(i + 1) % n];
            ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt()
        })
        .sum()
}

/// Shoelace signed area of the closed polygon through `points`.
pub fn polyline_signed_area(points: &[(f64, f64)]) -> f64 {
    let n = points.len();
    0.5 * (0..n)
        .map(|i| {
            let (x0, y0) = points[i];
            let (x1, y1) = points[(i + 1) % n];
            x0 * y1 - x1 * y0
        })
        .sum::<f64>()
}

/// Perimeter / √|area| for the straight-edge polygon (exact closed forms for
/// simple shapes; used as the oracle-mode cost).
pub fn polyline_cost(points: &[(f64, f64)]) -> Result<f64, EnvError> {
    let area = polyline_signed_area(points).abs();
    if area < 1e-9 {
        return Err(EnvError::DegenerateShape { area });
    }
    Ok(polyline_perimeter(points) / area.sqrt())
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn segments_cross(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

/// Whether the closed control polygon properly self-intersects (a cheap proxy
/// for spline self-intersection, used only for the warning channel).
pub fn polygon_self_intersects(points: &[(f64, f64)]) -> bool {
    let n = points.len();
    for i in 0..n {
        let a = points[i];
        let b = points[(i + 1) % n];
        for j in (i + 2)..n {
            // Skip the two edges adjacent to edge i (sharing an endpoint).
            if i == 0 && j == n - 1 {
                continue;
            }
            let c = points[j];
            let d = points[(j + 1) % n];
            if segments_cross(a, b, c, d) {
                return true;
            }
        }
    }
    false
}
