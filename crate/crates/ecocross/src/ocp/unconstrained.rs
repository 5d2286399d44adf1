//! Energy-optimal profile between fixed boundary states with no path
//! constraints. The minimizer of the battery-energy functional under the
//! longitudinal dynamics is a quadratic speed trajectory; its two shape
//! coefficients follow in closed form from the boundary conditions.

use super::{BoundaryConditions, OcpError};
use crate::ocp::profile::{Segment, SpeedProfile};

/// Shape coefficients `(b, c)` of the optimal quadratic speed profile
/// `v(k) = v0 + b k + c k²` covering distance `d` in time `t` and reaching
/// final speed `vf`.
pub fn quad_coeffs(v0: f64, vf: f64, d: f64, t: f64) -> (f64, f64) {
    let b = (6.0 * d / t - 4.0 * v0 - 2.0 * vf) / t;
    let c = (3.0 * v0 + 3.0 * vf - 6.0 * d / t) / (t * t);
    (b, c)
}

/// Inverse map: the `(vf, d)` reached by a quadratic segment with shape
/// `(b, c)` after time `t` from initial speed `v0`.
pub fn boundary_from_coeffs(v0: f64, b: f64, c: f64, t: f64) -> (f64, f64) {
    let vf = v0 + b * t + c * t * t;
    let d = v0 * t + b * t * t / 2.0 + c * t * t * t / 3.0;
    (vf, d)
}

/// Energy-optimal junction speed when two consecutive quadratic arcs meet
/// at a fixed interior point: arc one covers `d1` in `t1` from speed `v_a`,
/// arc two covers `d2` in `t2` ending at speed `v_b`. The total energy is a
/// strictly convex quadratic in the junction speed, so the stationary point
/// is the global minimum.
pub fn interior_junction_speed(v_a: f64, d1: f64, t1: f64, d2: f64, t2: f64, v_b: f64) -> f64 {
    (3.0 * d1 / (t1 * t1) + 3.0 * d2 / (t2 * t2) - v_a / t1 - v_b / t2)
        / (2.0 / t1 + 2.0 / t2)
}

/// Single-segment optimal profile for the given boundary conditions.
pub fn solve_unconstrained(bc: &BoundaryConditions) -> Result<SpeedProfile, OcpError> {
    bc.check()?;
    let (b, c) = quad_coeffs(bc.v0, bc.vf, bc.dist(), bc.t);
    Ok(SpeedProfile {
        segments: vec![Segment::from_speed(0.0, bc.x0, bc.v0, b, c, bc.t)],
    })
}
