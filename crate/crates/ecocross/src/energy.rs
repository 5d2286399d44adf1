//! Battery power model and closed-form segment energy.
//!
//! All power and energy quantities are normalized per unit vehicle mass
//! (W/kg and J/kg). The traction input is `u = a + h`, where `a` is the
//! commanded acceleration and `h` a constant lumped resistive deceleration.

use serde::{Deserialize, Serialize};

/// Lumped electric powertrain parameters, normalized per unit mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowertrainParams {
    /// Linear coupling between traction input and speed.
    pub p0: f64,
    /// Quadratic loss coefficient on the traction input.
    pub p1: f64,
    /// Constant resistive deceleration in m/s²; `u = a + h`.
    pub h: f64,
}

impl Default for PowertrainParams {
    fn default() -> Self {
        PowertrainParams { p0: 1.0, p1: 0.1, h: 0.05 }
    }
}

impl PowertrainParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.p0 > 0.0) {
            return Err(format!("powertrain p0 must be positive, got {}", self.p0));
        }
        if !(self.p1 > 0.0) {
            return Err(format!("powertrain p1 must be positive, got {}", self.p1));
        }
        if !(self.h >= 0.0) {
            return Err(format!("powertrain h must be nonnegative, got {}", self.h));
        }
        Ok(())
    }
}

/// Instantaneous battery power per unit mass for traction input `u` at
/// speed `v`. Negative values model regeneration and are not clipped.
#[inline]
pub fn battery_power(u: f64, v: f64, pt: &PowertrainParams) -> f64 {
    pt.p0 * u * v + pt.p1 * u * u
}

/// Exact battery energy of one quadratic-speed segment.
///
/// The segment is identified by its boundary values: start speed `v0`, end
/// speed `vf`, covered distance `d` and duration `t`. For fixed `(v0, t)`
/// these determine the linear and quadratic speed coefficients uniquely, so
/// the formula applies to every quadratic-speed segment, not only to
/// full-horizon optimal ones.
#[inline]
pub fn segment_energy(v0: f64, vf: f64, d: f64, t: f64, pt: &PowertrainParams) -> f64 {
    debug_assert!(t > 0.0, "segment duration must be positive");
    let kin = 0.5 * (vf * vf - v0 * v0);
    let accel_bracket =
        3.0 * d * d / (t * t * t) - 3.0 * d * (v0 + vf) / (t * t) + (v0 * v0 + v0 * vf + vf * vf) / t;
    pt.p0 * (pt.h * d + kin) + pt.p1 * (pt.h * pt.h * t + 2.0 * pt.h * (vf - v0) + 4.0 * accel_bracket)
}
