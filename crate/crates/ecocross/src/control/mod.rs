//! Per-vehicle longitudinal controllers.
//!
//! Three controllers share one world view: a reactive car-following
//! baseline in [`idm`], and two energy-optimal planners in [`eco`] that
//! differ in when conflicts are detected and how much the conflicting
//! vehicles reveal about their future motion.

use crate::conflicts::{CrossingOrder, VehicleId};
use crate::energy::PowertrainParams;
use crate::geometry::{CrossingTable, PathGeometry, Route};
use crate::ocp::profile::SpeedProfile;
use crate::ocp::Limits;
use std::collections::BTreeMap;

pub mod eco;
pub mod idm;

/// Which controller drives the vehicles of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    Idm,
    NcEd,
    CEd,
}

impl ControllerKind {
    pub fn parse(s: &str) -> Option<ControllerKind> {
        match s {
            "idm" => Some(ControllerKind::Idm),
            "nc_ed" | "nc-ed" => Some(ControllerKind::NcEd),
            "c_ed" | "c-ed" => Some(ControllerKind::CEd),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ControllerKind::Idm => "idm",
            ControllerKind::NcEd => "nc_ed",
            ControllerKind::CEd => "c_ed",
        }
    }
}

/// Instantaneous state of one vehicle as others can observe it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleCore {
    pub id: VehicleId,
    /// Distance along the own path from control-zone entry, meters.
    pub x: f64,
    pub v: f64,
    /// Acceleration currently applied, observable by sensors.
    pub a: f64,
    pub entry_time: f64,
    /// Outside the control zone: not yet admitted or already exited.
    /// Absent vehicles are invisible to leader scans and plan broadcasts;
    /// an exited predecessor still counts through the passage log.
    pub absent: bool,
}

/// A published plan: the owner's remaining speed profile anchored at an
/// absolute time and path position, plus the arrival times other vehicles
/// need, precomputed from the same profile.
#[derive(Debug, Clone)]
pub struct Intention {
    pub owner: VehicleId,
    /// Absolute time of the profile's local origin.
    pub t0: f64,
    /// Path position of the profile's local origin, meters.
    pub x0: f64,
    pub profile: SpeedProfile,
    /// Arrival times at the owner's crossing points, absolute seconds,
    /// keyed by the other vehicle of the pair.
    pub crossing_arrivals: Vec<(VehicleId, f64)>,
    /// Arrival time at the merge point plus the merge headway offset,
    /// absolute seconds; `None` when already past it.
    pub merge_offset_arrival: Option<f64>,
}

impl Intention {
    /// Arrival time at absolute path position `s`, absolute seconds.
    /// `None` when the plan never reaches it or is already past it.
    pub fn arrival_at(&self, s: f64) -> Option<f64> {
        self.profile.time_at_position(s - self.x0).map(|k| self.t0 + k)
    }

    /// Absolute end time of the published plan.
    pub fn end_time(&self) -> f64 {
        self.t0 + self.profile.duration()
    }
}

/// Published plans, indexed by vehicle id. Entries are replaced on every
/// re-plan and cleared when the owner leaves.
#[derive(Debug, Clone, Default)]
pub struct IntentionStore {
    slots: Vec<Option<Intention>>,
}

impl IntentionStore {
    pub fn get(&self, id: VehicleId) -> Option<&Intention> {
        self.slots.get(id).and_then(|s| s.as_ref())
    }

    pub fn publish(&mut self, intent: Intention) {
        let id = intent.owner;
        if self.slots.len() <= id {
            self.slots.resize_with(id + 1, || None);
        }
        self.slots[id] = Some(intent);
    }

    pub fn clear(&mut self, id: VehicleId) {
        if let Some(slot) = self.slots.get_mut(id) {
            *slot = None;
        }
    }
}

/// Times at which vehicles cleared the points their followers wait on.
/// Crossing passages are per conflict pair because the shared point sits
/// at a different distance for each pair; merge passages are per vehicle.
#[derive(Debug, Clone, Default)]
pub struct PassageLog {
    /// (watched vehicle, subject vehicle) -> time the watched vehicle
    /// passed its distance to their shared crossing point.
    crossings: BTreeMap<(VehicleId, VehicleId), f64>,
    /// Vehicle -> time it passed its merge point plus the headway offset.
    merges: BTreeMap<VehicleId, f64>,
}

impl PassageLog {
    pub fn crossing(&self, watched: VehicleId, subject: VehicleId) -> Option<f64> {
        self.crossings.get(&(watched, subject)).copied()
    }

    pub fn merge(&self, watched: VehicleId) -> Option<f64> {
        self.merges.get(&watched).copied()
    }

    pub fn record_crossing(&mut self, watched: VehicleId, subject: VehicleId, t: f64) {
        self.crossings.entry((watched, subject)).or_insert(t);
    }

    pub fn record_merge(&mut self, watched: VehicleId, t: f64) {
        self.merges.entry(watched).or_insert(t);
    }
}

/// Everything a controller may observe when deciding one vehicle's next
/// acceleration. Slices are indexed by vehicle id.
pub struct WorldView<'a> {
    pub t: f64,
    pub order: &'a CrossingOrder,
    pub cores: &'a [VehicleCore],
    pub routes: &'a [Route],
    pub geoms: &'a [PathGeometry],
    /// Higher-priority vehicles frozen at each vehicle's admission, so a
    /// predecessor's exit does not drop a still-pending passage margin.
    pub preds: &'a [Vec<VehicleId>],
    pub table: &'a CrossingTable,
    pub passages: &'a PassageLog,
    pub intentions: &'a IntentionStore,
}

/// Planner tuning shared by both optimization-based controllers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdParams {
    /// Re-plan period, seconds.
    pub period: f64,
    /// Preview window over which shared plans are lumped and measured
    /// predictions are trusted, seconds.
    pub preview: f64,
    /// How far before the central zone the intersection state becomes
    /// visible to a non-cooperative vehicle, meters.
    pub d_vis_back: f64,
    /// Required speed at the visibility point, m/s.
    pub v_vis: f64,
    /// Minimum separation between arrivals at a shared crossing point,
    /// seconds.
    pub lateral_dt: f64,
    /// Headway offset behind a merging leader, meters.
    pub merge_ds: f64,
    /// Standstill gap behind a leader on the same lane, meters.
    pub s_min: f64,
    /// Remaining horizon below which the current plan is ridden out
    /// instead of re-solved, seconds.
    pub coast_guard: f64,
    pub lim: Limits,
    pub pt: PowertrainParams,
}

impl Default for EdParams {
    fn default() -> Self {
        let lim = Limits::default();
        EdParams {
            period: 0.1,
            preview: 5.0,
            d_vis_back: 4.5,
            v_vis: lim.a_max * 1.0,
            lateral_dt: 2.5,
            merge_ds: 8.0,
            s_min: 7.0,
            coast_guard: 0.25,
            lim,
            pt: PowertrainParams::default(),
        }
    }
}

/// Speed allowed at path position `x` by the route's turn arc: the capped
/// speed inside the arc, a braking envelope toward it on the approach,
/// and no limit past the merge point or on through routes. `margin` is
/// subtracted from the grip limit; `brake` shapes the approach.
pub fn turn_envelope(x: f64, geom: &PathGeometry, brake: f64, margin: f64) -> f64 {
    if !geom.v_safe.is_finite() {
        return f64::INFINITY;
    }
    let cap = geom.v_safe - margin;
    if x < geom.d_div {
        (cap * cap + 2.0 * brake * (geom.d_div - x)).sqrt()
    } else if x <= geom.d_merge {
        cap
    } else {
        f64::INFINITY
    }
}

/// Mean acceleration of a published plan over the preview window starting
/// at absolute time `t`: the exact integral of the profile's acceleration,
/// which reduces to a speed difference. The window is truncated to the
/// plan's remaining horizon; `None` when nothing of the plan remains.
pub fn future_mean_accel(intent: &Intention, t: f64, preview: f64) -> Option<f64> {
    let k0 = t - intent.t0;
    let len = (intent.profile.duration() - k0).min(preview);
    if len <= 1e-9 {
        return None;
    }
    let v_now = intent.profile.speed(k0);
    let v_end = intent.profile.speed(k0 + len);
    Some((v_end - v_now) / len)
}

/// Pairs each vehicle's prescribed trip duration with its terminal speed.
/// Durations come from a completed baseline run over the same arrival
/// sequence; a vehicle the baseline never finished is a hard error.
pub fn assign_final_time(
    trip_durations: &[Option<f64>],
    final_speeds: &[f64],
) -> Result<Vec<(f64, f64)>, String> {
    if trip_durations.len() != final_speeds.len() {
        return Err(format!(
            "{} trip durations for {} vehicles",
            trip_durations.len(),
            final_speeds.len()
        ));
    }
    trip_durations
        .iter()
        .zip(final_speeds)
        .enumerate()
        .map(|(id, (trip, &vf))| match trip {
            Some(t) if *t > 0.0 => Ok((*t, vf)),
            Some(t) => Err(format!("vehicle {id} has nonpositive trip duration {t}")),
            None => Err(format!("vehicle {id} has no baseline trip duration")),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocp::unconstrained::solve_unconstrained;
    use crate::ocp::BoundaryConditions;

    fn intent_from(bc: &BoundaryConditions, t0: f64, x0: f64) -> Intention {
        Intention {
            owner: 0,
            t0,
            x0,
            profile: solve_unconstrained(bc).unwrap(),
            crossing_arrivals: Vec::new(),
            merge_offset_arrival: None,
        }
    }

    #[test]
    fn mean_accel_of_constant_acceleration_plan_is_that_constant() {
        // Boundary conditions consistent with a single constant
        // acceleration: distance equals the trapezoid area.
        let bc = BoundaryConditions::local(6.0, 8.0, 70.0, 10.0).unwrap();
        let intent = intent_from(&bc, 2.0, 10.0);
        let a = future_mean_accel(&intent, 2.0, 5.0).unwrap();
        assert!((a - 0.2).abs() < 1e-9, "got {a}");
    }

    #[test]
    fn mean_accel_is_the_speed_difference_over_the_window() {
        let bc = BoundaryConditions::local(8.0, 6.0, 68.0, 9.0).unwrap();
        let intent = intent_from(&bc, 0.0, 0.0);
        let a = future_mean_accel(&intent, 1.0, 4.0).unwrap();
        let expect = (intent.profile.speed(5.0) - intent.profile.speed(1.0)) / 4.0;
        assert!((a - expect).abs() < 1e-12);
    }

    #[test]
    fn mean_accel_window_truncates_to_the_plan_end() {
        let bc = BoundaryConditions::local(8.0, 8.0, 24.0, 3.0).unwrap();
        let intent = intent_from(&bc, 0.0, 0.0);
        let a = future_mean_accel(&intent, 1.0, 5.0).unwrap();
        let expect = (intent.profile.speed(3.0) - intent.profile.speed(1.0)) / 2.0;
        assert!((a - expect).abs() < 1e-12);
        assert!(future_mean_accel(&intent, 3.0, 5.0).is_none());
    }

    #[test]
    fn intention_arrival_uses_the_anchor() {
        let bc = BoundaryConditions::local(8.0, 8.0, 80.0, 10.0).unwrap();
        let intent = intent_from(&bc, 3.0, 20.0);
        let arr = intent.arrival_at(60.0).unwrap();
        let expect = 3.0 + intent.profile.time_at_position(40.0).unwrap();
        assert!((arr - expect).abs() < 1e-12);
        assert!(intent.arrival_at(20.0 + 81.0).is_none());
    }

    #[test]
    fn final_time_assignment_passes_through_and_rejects_gaps() {
        let trips = vec![Some(12.8), Some(14.25)];
        let finals = vec![8.0, 9.1];
        let out = assign_final_time(&trips, &finals).unwrap();
        assert_eq!(out, vec![(12.8, 8.0), (14.25, 9.1)]);
        let missing = vec![Some(12.8), None];
        let err = assign_final_time(&missing, &finals).unwrap_err();
        assert!(err.contains("vehicle 1"), "got {err}");
    }

    #[test]
    fn passage_log_keeps_the_first_record() {
        let mut log = PassageLog::default();
        log.record_crossing(2, 5, 8.25);
        log.record_crossing(2, 5, 9.0);
        assert_eq!(log.crossing(2, 5), Some(8.25));
        assert_eq!(log.crossing(5, 2), None);
        log.record_merge(3, 4.0);
        assert_eq!(log.merge(3), Some(4.0));
    }
}
