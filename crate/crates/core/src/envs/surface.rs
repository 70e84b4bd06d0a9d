//! Surface-modeling environment: the state is a closed boundary curve given
//! by `n` spline control points, and the cost is perimeter / √area of the
//! enclosed region — minimized by a circle.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::envs::spline::{polygon_self_intersects, ClosedSpline};
use crate::envs::EnvError;

/// Base quadrature density (samples over the whole curve before adaptive
/// doubling).
pub const QUAD_BASE: usize = 1024;
/// Stopping tolerance for the adaptive quadrature.
pub const QUAD_TOL: f64 = 1e-6;
/// Sampled star polygons have radii in this range.
pub const RADIUS_MIN: f64 = 0.5;
pub const RADIUS_MAX: f64 = 1.5;
/// Enclosed areas with |area| below this are rejected as degenerate.
pub const MIN_AREA: f64 = 1e-9;

#[derive(Debug)]
pub struct SurfaceEnv {
    n: usize,
    /// Number of cost evaluations whose control polygon self-intersected.
    /// Such states are still scored (the signed area is taken in absolute
    /// value); the counter is a diagnostic channel.
    warnings: AtomicU64,
}

impl SurfaceEnv {
    pub fn new(control_points: usize) -> Result<Self, EnvError> {
        if control_points < 4 {
            return Err(EnvError::Config(format!(
                "surface environment needs at least 4 control points, got {control_points}"
            )));
        }
        Ok(Self { n: control_points, warnings: AtomicU64::new(0) })
    }

    pub fn knot_count(&self) -> usize {
        self.n
    }

    pub fn state_dim(&self) -> usize {
        2 * self.n
    }

    pub fn warnings(&self) -> u64 {
        self.warnings.load(Ordering::Relaxed)
    }

    /// Interpret an interleaved state vector (x₀, y₀, x₁, y₁, …) as knots.
    pub fn knots_from_state(state: &[f64]) -> Vec<(f64, f64)> {
        debug_assert!(state.len().is_multiple_of(2));
        state.chunks_exact(2).map(|c| (c[0], c[1])).collect()
    }

    /// Inverse of [`knots_from_state`].
    pub fn state_from_knots(knots: &[(f64, f64)]) -> Vec<f64> {
        knots.iter().flat_map(|&(x, y)| [x, y]).collect()
    }

    pub fn cost(&self, state: &[f64]) -> Result<f64, EnvError> {
        let knots = Self::knots_from_state(state);
        if polygon_self_intersects(&knots) {
            self.warnings.fetch_add(1, Ordering::Relaxed);
        }
        let spline = ClosedSpline::fit(&knots)?;
        let measure = spline.measure(QUAD_BASE, QUAD_TOL);
        let area = measure.signed_area.abs();
        if area < MIN_AREA {
            return Err(EnvError::DegenerateShape { area });
        }
        Ok(measure.perimeter / area.sqrt())
    }

    /// Draw a random star-shaped polygon around the origin: `n` sorted angles
    /// and radii uniform in `[RADIUS_MIN, RADIUS_MAX)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        use std::f64::consts::PI;
        let mut angles: Vec<f64> = (0..self.n).map(|_| rng.gen_range(-PI..PI)).collect();
        angles.sort_by(|a, b| a.partial_cmp(b).expect("angles are finite"));
        let mut state = Vec::with_capacity(2 * self.n);
        for theta in angles {
            let r = rng.gen_range(RADIUS_MIN..RADIUS_MAX);
            state.push(r * theta.cos());
            state.push(r * theta.sin());
        }
        state
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn circle_state(n: usize, radius: f64) -> Vec<f64> {
        (0..n)
            .flat_map(|i| {
                let theta = 2.0 * PI * i as f64 / n as f64;
                [radius * theta.cos(), radius * theta.sin()]
            })
            .collect()
    }

    #[test]
    fn circle_cost_is_isoperimetric_optimum() {
        // Perimeter/√area of a circle is 2πr/√(πr²) = 2√π regardless of r.
        let env = SurfaceEnv::new(64).unwrap();
        for radius in [1.0, 0.7] {
            let cost = env.cost(&circle_state(64, radius)).unwrap();
            let want = 2.0 * PI.sqrt();
            assert!((cost - want).abs() < 1e-3, "r={radius}: {cost} vs {want}");
        }
    }

    #[test]
    fn cost_is_scale_invariant() {
        let env = SurfaceEnv::new(16).unwrap();
        let mut rng = crate::rng::stream(61, "surface-test", 0);
        for _ in 0..5 {
            let state = env.sample(&mut rng);
            let base = env.cost(&state).unwrap();
            for lambda in [0.5, 2.0] {
                let scaled: Vec<f64> = state.iter().map(|v| lambda * v).collect();
                let got = env.cost(&scaled).unwrap();
                assert!((got - base).abs() / base < 1e-6, "lambda={lambda}: {got} vs {base}");
            }
        }
    }

    #[test]
    fn isoperimetric_lower_bound_on_random_shapes() {
        let env = SurfaceEnv::new(12).unwrap();
        let mut rng = crate::rng::stream(62, "surface-test", 1);
        let floor = 2.0 * PI.sqrt() - 5e-3;
        for _ in 0..20 {
            let state = env.sample(&mut rng);
            let cost = env.cost(&state).unwrap();
            assert!(cost >= floor, "cost {cost} below isoperimetric floor {floor}");
        }
    }

    #[test]
    fn samples_are_star_shaped() {
        let env = SurfaceEnv::new(24).unwrap();
        let mut rng = crate::rng::stream(63, "surface-test", 2);
        for _ in 0..10 {
            let state = env.sample(&mut rng);
            let knots = SurfaceEnv::knots_from_state(&state);
            assert_eq!(knots.len(), 24);
            let mut prev_angle = f64::NEG_INFINITY;
            for (x, y) in knots {
                let r = x.hypot(y);
                assert!((RADIUS_MIN..RADIUS_MAX).contains(&r), "radius {r}");
                let angle = y.atan2(x);
                assert!(angle > prev_angle, "angles not strictly increasing");
                prev_angle = angle;
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let env = SurfaceEnv::new(8).unwrap();
        let a = env.sample(&mut crate::rng::stream(64, "surface-test", 3));
        let b = env.sample(&mut crate::rng::stream(64, "surface-test", 3));
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_flat_shape_is_rejected() {
        // Collinear knots enclose no area.
        let state = SurfaceEnv::state_from_knots(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)]);
        let env = SurfaceEnv::new(4).unwrap();
        assert!(matches!(env.cost(&state), Err(EnvError::DegenerateShape { .. })));
    }

    #[test]
    fn self_intersection_is_scored_but_warned() {
        // A pentagon whose fourth vertex pulls one edge across another; the
        // lobes do not cancel, so the enclosed |area| stays well above the
        // degeneracy floor.
        let knots = [(0.0, 0.0), (4.0, 0.0), (4.0, 3.0), (1.0, -1.0), (0.0, 3.0)];
        assert!(polygon_self_intersects(&knots));
        let state = SurfaceEnv::state_from_knots(&knots);
        let env = SurfaceEnv::new(5).unwrap();
        assert_eq!(env.warnings(), 0);
        let cost = env.cost(&state).unwrap();
        assert!(cost.is_finite() && cost > 0.0);
        assert_eq!(env.warnings(), 1);
        env.cost(&state).unwrap();
        assert_eq!(env.warnings(), 2);
    }

    #[test]
    fn rejects_too_few_control_points() {
        assert!(matches!(SurfaceEnv::new(3), Err(EnvError::Config(_))));
    }
}
