//! Energy-optimal longitudinal control and microscopic simulation of
//! automated electric vehicles crossing a single unsignalized four-way
//! intersection.
//!
//! The library provides:
//! - exact intersection geometry (twelve routes, conflict points, turn
//!   speed limits) in [`geometry`],
//! - a battery power model and closed-form trip energy in [`energy`],
//! - analytical minimum-energy speed profiles under boundary, interior-point
//!   and moving-bound constraints in [`ocp`],
//! - crossing-order and conflict-set bookkeeping in [`conflicts`],
//! - three longitudinal controllers (car-following baseline and two
//!   optimization-based schemes with different information models) in
//!   [`control`],
//! - a deterministic time-stepped simulator with safety auditing in [`sim`],
//! - an independent dynamic-programming verifier in [`oracle`].

pub mod conflicts;
pub mod control;
pub mod energy;
pub mod geometry;
pub mod ocp;
pub mod oracle;
pub mod sim;

pub use energy::PowertrainParams;
pub use geometry::{IntersectionSpec, Route};
pub use ocp::profile::SpeedProfile;
