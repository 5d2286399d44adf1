//! Analytical minimum-energy speed profiles.
//!
//! Every solver in this module works in the frame of the vehicle at the
//! moment of solving: position 0 is the current position, time 0 is now.
//! Positions grow along the vehicle's own path arclength. The decision
//! variable is the traction input `u = a + h`; solutions are piecewise
//! quadratic in speed and cubic in position.

pub mod car_following;
pub mod compose;
pub mod numeric;
pub mod profile;
pub mod unconstrained;

use std::fmt;

/// Endpoint data of one trip segment: start state, end state, horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryConditions {
    /// Start position, m.
    pub x0: f64,
    /// Start speed, m/s.
    pub v0: f64,
    /// End position, m.
    pub xf: f64,
    /// End speed, m/s.
    pub vf: f64,
    /// Horizon, s.
    pub t: f64,
}

impl BoundaryConditions {
    pub fn new(x0: f64, v0: f64, xf: f64, vf: f64, t: f64) -> Result<Self, OcpError> {
        let bc = BoundaryConditions { x0, v0, xf, vf, t };
        bc.check()?;
        Ok(bc)
    }

    /// Local-frame variant: distance `d` ahead, horizon `t`.
    pub fn local(v0: f64, vf: f64, d: f64, t: f64) -> Result<Self, OcpError> {
        Self::new(0.0, v0, d, vf, t)
    }

    pub fn check(&self) -> Result<(), OcpError> {
        if !(self.t > 0.0) || !self.t.is_finite() {
            return Err(OcpError::BadHorizon(self.t));
        }
        if !(self.xf > self.x0) {
            return Err(OcpError::BadDistance(self.xf - self.x0));
        }
        Ok(())
    }

    /// Distance to cover.
    #[inline]
    pub fn dist(&self) -> f64 {
        self.xf - self.x0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OcpError {
    /// Horizon not positive and finite.
    BadHorizon(f64),
    /// Required travel distance not positive.
    BadDistance(f64),
    /// No profile satisfies the constraints (negative speed, acceleration
    /// limit, unreachable junction, or no admissible contact time).
    Infeasible,
}

impl fmt::Display for OcpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OcpError::BadHorizon(t) => write!(f, "horizon must be positive and finite, got {t}"),
            OcpError::BadDistance(d) => write!(f, "travel distance must be positive, got {d}"),
            OcpError::Infeasible => write!(f, "no feasible speed profile for the given constraints"),
        }
    }
}

impl std::error::Error for OcpError {}

/// Hard actuation limits used by feasibility screening.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Limits {
    /// Maximum acceleration magnitude, m/s².
    pub a_max: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { a_max: 4.0 }
    }
}

/// Slack applied to v >= 0 and |a| <= a_max screening so that exact
/// touching solutions are not rejected for rounding.
pub const FEAS_EPS: f64 = 1e-9;
