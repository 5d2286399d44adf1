//! Post-hoc audit of a recorded run against the hard safety rules.
//!
//! The auditor works from the log alone: it rederives path geometry from
//! each vehicle's route, pairs vehicles that share pavement, and measures
//! gaps, crossing separations, turn speeds, and the internal consistency
//! of the recorded kinematics.

use crate::control::EdParams;
use crate::geometry::{CrossingTable, IntersectionSpec, PathGeometry, Route};

use super::log::{LogRow, TrajectoryLog};

/// Measurement tolerance for the gap, separation, and turn-speed checks,
/// in meters or seconds as appropriate.
pub const AUDIT_TOL: f64 = 0.05;

/// Largest admissible mismatch between logged positions and the distance
/// integrated from logged speeds, meters per trip.
pub const INTEGRATION_TOL: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct SafetyReport {
    /// Smallest bumper gap between any pair sharing a lane, meters.
    pub min_same_path_gap: f64,
    /// Smallest arrival-time separation at any shared crossing point,
    /// seconds.
    pub min_crossing_separation: f64,
    /// Largest excess of a turning vehicle's speed over its arc limit,
    /// m/s; negative infinity when nobody turned.
    pub max_turn_speed_excess: f64,
    /// Largest per-trip gap between logged positions and integrated
    /// speeds, meters.
    pub max_integration_defect: f64,
    /// Emergency braking events reported by the controllers; the runner
    /// fills this in after the trajectory checks.
    pub fallback_events: u32,
    pub violations: Vec<String>,
}

impl SafetyReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

struct Track<'a> {
    id: usize,
    route: Route,
    geom: PathGeometry,
    rows: Vec<&'a LogRow>,
}

/// Audits a complete log. Rows must be grouped or sortable by time; each
/// vehicle's rows must already be in trip order, which `TrajectoryLog::sort`
/// guarantees.
pub fn check_safety(
    log: &TrajectoryLog,
    spec: &IntersectionSpec,
    prm: &EdParams,
) -> SafetyReport {
    let mut rep = SafetyReport {
        min_same_path_gap: f64::INFINITY,
        min_crossing_separation: f64::INFINITY,
        max_turn_speed_excess: f64::NEG_INFINITY,
        max_integration_defect: 0.0,
        fallback_events: 0,
        violations: Vec::new(),
    };
    let table = match spec.crossing_table() {
        Ok(t) => t,
        Err(e) => {
            rep.violations.push(format!("invalid geometry: {e}"));
            return rep;
        }
    };
    let tracks: Vec<Track> = log
        .vehicle_ids()
        .into_iter()
        .map(|id| {
            let rows = log.rows_of(id);
            let route = rows[0].route;
            Track { id, route, geom: spec.path(route), rows }
        })
        .collect();

    for tr in &tracks {
        check_single(tr, &mut rep);
    }
    for i in 0..tracks.len() {
        for j in i + 1..tracks.len() {
            check_pair(&tracks[i], &tracks[j], &table, prm, &mut rep);
        }
    }
    rep
}

fn check_single(tr: &Track, rep: &mut SafetyReport) {
    let rows = &tr.rows;
    for w in rows.windows(2) {
        if w[1].t < w[0].t - 1e-12 {
            rep.violations.push(format!("vehicle {}: time goes backward at {:.3}", tr.id, w[1].t));
        }
    }
    for r in rows {
        if r.v < -1e-9 {
            rep.violations.push(format!("vehicle {}: negative speed {:.6} at t = {:.3}", tr.id, r.v, r.t));
        }
        if r.x < -1e-6 || r.x > tr.geom.total_len + 1e-6 {
            rep.violations.push(format!("vehicle {}: position {:.6} off the path at t = {:.3}", tr.id, r.x, r.t));
        }
    }

    if tr.geom.v_safe.is_finite() {
        for r in rows {
            if r.x >= tr.geom.d_div - 1e-9 && r.x <= tr.geom.d_merge + 1e-9 {
                let excess = r.v - tr.geom.v_safe;
                rep.max_turn_speed_excess = rep.max_turn_speed_excess.max(excess);
                if excess > AUDIT_TOL {
                    rep.violations.push(format!(
                        "vehicle {}: {:.3} m/s on the {:.1} m arc at t = {:.3} (limit {:.3})",
                        tr.id, r.v, tr.geom.arc_len, r.t, tr.geom.v_safe
                    ));
                }
            }
        }
    }

    let mut integral = 0.0;
    for w in rows.windows(2) {
        integral += interval_distance(w[0], w[1]);
    }
    let defect = ((rows[rows.len() - 1].x - rows[0].x) - integral).abs();
    rep.max_integration_defect = rep.max_integration_defect.max(defect);
    if defect > INTEGRATION_TOL {
        rep.violations.push(format!(
            "vehicle {}: positions drift {:.6} m from integrated speeds",
            tr.id, defect
        ));
    }
}

/// Distance covered between two consecutive rows, reconstructed from the
/// recorded endpoint kinematics. Constant-acceleration steps and braking
/// steps that park mid-interval are recognized exactly; anything else is
/// treated as a smooth planned arc, for which the derivative-corrected
/// trapezoid is exact on quadratic speed segments.
fn interval_distance(r0: &LogRow, r1: &LogRow) -> f64 {
    let h = r1.t - r0.t;
    if h <= 0.0 {
        return 0.0;
    }
    let v_pred = r0.v + r0.a * h;
    if (r1.v - v_pred).abs() <= 1e-9 {
        return 0.5 * h * (r0.v + r1.v);
    }
    if r0.a < -1e-12 && r1.v.abs() <= 1e-12 && v_pred < 0.0 {
        return r0.v * r0.v / (-2.0 * r0.a);
    }
    0.5 * h * (r0.v + r1.v) + h * h / 12.0 * (r0.a - r1.a)
}

/// How two routes share pavement for gap purposes.
enum LaneRelation {
    /// Identical route: the gap rule binds over the whole path.
    WholePath,
    /// Same approach lane: binds while both are before their diverge
    /// points.
    EntryLane,
    /// Same exit lane: binds once both are past their merge points.
    ExitLane,
}

fn lane_relation(a: Route, b: Route) -> Option<LaneRelation> {
    if a == b {
        Some(LaneRelation::WholePath)
    } else if a.entry_leg == b.entry_leg {
        Some(LaneRelation::EntryLane)
    } else if a.exit_leg == b.exit_leg {
        Some(LaneRelation::ExitLane)
    } else {
        None
    }
}

fn check_pair(
    a: &Track,
    b: &Track,
    table: &CrossingTable,
    prm: &EdParams,
    rep: &mut SafetyReport,
) {
    if let Some(rel) = lane_relation(a.route, b.route) {
        check_lane_gaps(a, b, &rel, prm.s_min, rep);
    }
    if let Some((da, db)) = table.get(a.route, b.route) {
        let (ta, tb) = (crossing_time(&a.rows, da), crossing_time(&b.rows, db));
        if let (Some(ta), Some(tb)) = (ta, tb) {
            let sep = (ta - tb).abs();
            rep.min_crossing_separation = rep.min_crossing_separation.min(sep);
            if sep < prm.lateral_dt - AUDIT_TOL {
                rep.violations.push(format!(
                    "vehicles {} and {} cross {:.3} s apart (need {:.1})",
                    a.id, b.id, sep, prm.lateral_dt
                ));
            }
        }
    }
}

/// Walks both row lists in time and measures the bumper gap at every
/// instant both vehicles were logged. Grid instants match bit-exactly
/// because every row time is the same multiple of the step size.
fn check_lane_gaps(a: &Track, b: &Track, rel: &LaneRelation, s_min: f64, rep: &mut SafetyReport) {
    let (mut ia, mut ib) = (0, 0);
    let mut worst: Option<(f64, f64)> = None;
    while ia < a.rows.len() && ib < b.rows.len() {
        let (ra, rb) = (a.rows[ia], b.rows[ib]);
        match ra.t.total_cmp(&rb.t) {
            std::cmp::Ordering::Less => ia += 1,
            std::cmp::Ordering::Greater => ib += 1,
            std::cmp::Ordering::Equal => {
                if let Some(gap) = pair_gap(rel, ra, rb, &a.geom, &b.geom) {
                    rep.min_same_path_gap = rep.min_same_path_gap.min(gap);
                    if worst.map_or(true, |(g, _)| gap < g) {
                        worst = Some((gap, ra.t));
                    }
                }
                ia += 1;
                ib += 1;
            }
        }
    }
    if let Some((gap, t)) = worst {
        if gap < s_min - AUDIT_TOL {
            rep.violations.push(format!(
                "vehicles {} and {} close to {:.3} m at t = {:.3} (need {:.1})",
                a.id, b.id, gap, t, s_min
            ));
        }
    }
}

fn pair_gap(
    rel: &LaneRelation,
    ra: &LogRow,
    rb: &LogRow,
    ga: &PathGeometry,
    gb: &PathGeometry,
) -> Option<f64> {
    match rel {
        LaneRelation::WholePath => Some((ra.x - rb.x).abs()),
        LaneRelation::EntryLane => {
            if ra.x <= ga.d_div && rb.x <= gb.d_div {
                Some((ra.x - rb.x).abs())
            } else {
                None
            }
        }
        LaneRelation::ExitLane => {
            if ra.x >= ga.d_merge && rb.x >= gb.d_merge {
                Some(((ra.x - ga.d_merge) - (rb.x - gb.d_merge)).abs())
            } else {
                None
            }
        }
    }
}

/// First time the vehicle's position reaches `d`, interpolated inside the
/// bracketing step with the recorded start-of-step kinematics. None if
/// the log never reaches `d`.
fn crossing_time(rows: &[&LogRow], d: f64) -> Option<f64> {
    let k = rows.iter().position(|r| r.x >= d)?;
    if k == 0 {
        return Some(rows[0].t);
    }
    let (r0, r1) = (rows[k - 1], rows[k]);
    let h = r1.t - r0.t;
    let need = d - r0.x;
    let tau = if need <= 0.0 {
        0.0
    } else {
        let disc = r0.v * r0.v + 2.0 * r0.a * need;
        if disc >= 0.0 && r0.v + disc.sqrt() > 1e-9 {
            2.0 * need / (r0.v + disc.sqrt())
        } else if r1.x > r0.x {
            h * (need / (r1.x - r0.x))
        } else {
            h
        }
    };
    Some(r0.t + tau.clamp(0.0, h))
}
