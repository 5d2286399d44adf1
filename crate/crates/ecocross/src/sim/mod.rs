//! Deterministic time-stepped simulation of one intersection scenario.
//!
//! One step does four things in a fixed order: admit pending arrivals,
//! let every vehicle pick its move for the coming interval in crossing
//! priority order, record the state at the step start, then advance
//! everyone along the chosen motion with closed-form kinematics. Passages
//! over shared conflict points are timestamped during integration so
//! later deciders can release their constraints exactly.

pub mod arrivals;
pub mod log;
pub mod safety;

use crate::conflicts::{crossing_order, CrossingOrder, EntryRecord, VehicleId};
use crate::control::eco::{ed_step, Cooperation, EdState};
use crate::control::idm::{idm_intersection_step, IdmParams};
use crate::control::{
    assign_final_time, ControllerKind, EdParams, IntentionStore, PassageLog, VehicleCore,
    WorldView,
};
use crate::energy::battery_power;
use crate::geometry::{IntersectionSpec, Leg, PathGeometry, Route};
use crate::ocp::profile::SpeedProfile;

pub use arrivals::{generate_arrivals, ScenarioVehicle};
pub use log::{LogRow, TrajectoryLog, CSV_HEADER};
pub use safety::{check_safety, SafetyReport, AUDIT_TOL};

/// Everything one run needs besides the controller choice.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    /// Aggregate demand over all four approaches, vehicles per hour.
    pub flow_veh_per_hr: f64,
    pub n_vehicles: usize,
    pub seed: u64,
    /// Mean of the uniform entry and exit speed draws, m/s.
    pub speed_mean: f64,
    /// Halfwidth of the uniform speed draws, m/s.
    pub speed_halfwidth: f64,
    /// Entries closer together than this yield to the right, seconds.
    pub tie_window: f64,
    pub spec: IntersectionSpec,
    pub ed: EdParams,
    pub idm: IdmParams,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            flow_veh_per_hr: 1200.0,
            n_vehicles: 30,
            seed: 1,
            speed_mean: 8.3,
            speed_halfwidth: 2.0,
            tie_window: 0.5,
            spec: IntersectionSpec::default(),
            ed: EdParams::default(),
            idm: IdmParams::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.flow_veh_per_hr > 0.0) {
            return Err(format!("flow_veh_per_hr must be positive, got {}", self.flow_veh_per_hr));
        }
        if self.n_vehicles == 0 {
            return Err("n_vehicles must be at least 1".into());
        }
        if !(self.speed_mean > 0.0) {
            return Err(format!("speed_mean must be positive, got {}", self.speed_mean));
        }
        if !(self.speed_halfwidth >= 0.0 && self.speed_halfwidth < self.speed_mean) {
            return Err(format!(
                "speed_halfwidth must lie in [0, speed_mean), got {}",
                self.speed_halfwidth
            ));
        }
        if !(self.tie_window >= 0.0) {
            return Err(format!("tie_window must be nonnegative, got {}", self.tie_window));
        }
        if !(self.ed.period > 0.0) {
            return Err(format!("control period must be positive, got {}", self.ed.period));
        }
        if !(self.ed.preview > 0.0) {
            return Err(format!("preview horizon must be positive, got {}", self.ed.preview));
        }
        if !(self.ed.s_min > 0.0) {
            return Err(format!("s_min must be positive, got {}", self.ed.s_min));
        }
        if !(self.ed.lateral_dt > 0.0) {
            return Err(format!("lateral_dt must be positive, got {}", self.ed.lateral_dt));
        }
        if !(self.ed.lim.a_max > 0.0) {
            return Err(format!("a_max must be positive, got {}", self.ed.lim.a_max));
        }
        self.ed.pt.validate()?;
        self.spec.validate()?;
        Ok(())
    }
}

/// Per-vehicle outcome of one run.
#[derive(Debug, Clone)]
pub struct VehicleSummary {
    pub id: VehicleId,
    pub route: Route,
    pub scheduled_entry_s: f64,
    /// Actual entry time; later than scheduled when the approach lane was
    /// occupied.
    pub entry_s: f64,
    pub trip_time_s: f64,
    pub exit_speed_mps: f64,
    /// Battery energy integrated over the executed arcs, J per kg of
    /// vehicle mass.
    pub energy_j_per_kg: f64,
    /// Closed-form energy of the first committed plan; planning
    /// controllers only.
    pub planned_energy_j_per_kg: Option<f64>,
    pub queue_steps: u32,
    pub fallbacks: u32,
    pub overrun: bool,
}

/// Aggregate outcome of one run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub controller: ControllerKind,
    pub flow_veh_per_hr: f64,
    pub seed: u64,
    /// Sum of executed per-vehicle trip energies, J/kg.
    pub fleet_energy_j_per_kg: f64,
    pub mean_trip_time_s: f64,
    pub vehicles: Vec<VehicleSummary>,
    pub fallback_events: u32,
    pub queue_steps_total: u32,
}

/// Runs one scenario under the chosen controller. Planning controllers
/// first replay the same arrivals under the baseline to fix each
/// vehicle's prescribed trip duration and terminal speed.
pub fn run(
    cfg: &ScenarioConfig,
    kind: ControllerKind,
) -> Result<(TrajectoryLog, SafetyReport, RunSummary), String> {
    cfg.validate()?;
    let fleet = generate_arrivals(cfg);
    run_fleet(cfg, kind, &fleet)
}

/// Runs a scenario over an explicit arrival list. The list stands in for
/// the random demand, so replays and hand-built situations use the same
/// machinery as full runs.
pub fn run_fleet(
    cfg: &ScenarioConfig,
    kind: ControllerKind,
    fleet: &[ScenarioVehicle],
) -> Result<(TrajectoryLog, SafetyReport, RunSummary), String> {
    let targets = match kind {
        ControllerKind::Idm => None,
        _ => {
            let (_, _, base) = run_world(cfg, ControllerKind::Idm, fleet, None)?;
            let trips: Vec<Option<f64>> =
                base.vehicles.iter().map(|v| Some(v.trip_time_s)).collect();
            let finals: Vec<f64> = fleet.iter().map(|a| a.v_exit).collect();
            Some(assign_final_time(&trips, &finals)?)
        }
    };
    run_world(cfg, kind, fleet, targets.as_deref())
}

/// Per-vehicle bookkeeping outside the controller state.
struct Progress {
    v_desired: f64,
    entry: Option<f64>,
    exit: Option<f64>,
    /// Executed arcs (start speed, accel, accel slope, duration) since
    /// entry, for the trip energy account.
    arcs: Vec<(f64, f64, f64, f64)>,
    ed: Option<EdState>,
    planned_energy: Option<f64>,
}

/// How to advance a vehicle over the next step.
#[derive(Clone, Copy, PartialEq)]
enum Motion {
    Hold,
    /// Follow the stored plan from the current offset.
    PlanTail,
    /// Integrate a constant acceleration with the speed clamped at zero.
    Const(f64),
}

fn leg_slot(leg: Leg) -> usize {
    match leg {
        Leg::North => 0,
        Leg::East => 1,
        Leg::South => 2,
        Leg::West => 3,
    }
}

fn run_world(
    cfg: &ScenarioConfig,
    kind: ControllerKind,
    fleet: &[ScenarioVehicle],
    targets: Option<&[(f64, f64)]>,
) -> Result<(TrajectoryLog, SafetyReport, RunSummary), String> {
    let n = fleet.len();
    let dt = cfg.ed.period;
    let routes: Vec<Route> = fleet.iter().map(|a| a.route).collect();
    let geoms: Vec<PathGeometry> = routes.iter().map(|&r| cfg.spec.path(r)).collect();
    let table = cfg.spec.crossing_table()?;
    let coop = match kind {
        ControllerKind::Idm => None,
        ControllerKind::NcEd => Some(Cooperation::NonCooperative),
        ControllerKind::CEd => Some(Cooperation::Cooperative),
    };

    // Conflict points each vehicle passes, sorted along its own path:
    // (own distance, the other vehicle watching that point).
    let cross_marks: Vec<Vec<(f64, VehicleId)>> = (0..n)
        .map(|i| {
            let mut marks: Vec<(f64, VehicleId)> = (0..n)
                .filter(|&j| j != i)
                .filter_map(|j| table.get(routes[i], routes[j]).map(|(d, _)| (d, j)))
                .collect();
            marks.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            marks
        })
        .collect();

    let mut cores: Vec<VehicleCore> = (0..n)
        .map(|id| VehicleCore {
            id,
            x: 0.0,
            v: 0.0,
            a: 0.0,
            entry_time: f64::INFINITY,
            absent: true,
        })
        .collect();
    let mut progress: Vec<Progress> = fleet
        .iter()
        .map(|a| Progress {
            v_desired: a.v_entry,
            entry: None,
            exit: None,
            arcs: Vec::new(),
            ed: None,
            planned_energy: None,
        })
        .collect();
    let mut entries: Vec<EntryRecord> = Vec::new();
    let mut order = CrossingOrder::default();
    let mut preds: Vec<Vec<VehicleId>> = vec![Vec::new(); n];
    let mut passages = PassageLog::default();
    let mut intentions = IntentionStore::default();
    let mut motions: Vec<Motion> = vec![Motion::Hold; n];
    let mut log = TrajectoryLog::default();

    let deadline = fleet.last().map_or(0.0, |a| a.scheduled_entry) + 3600.0;
    let mut done = 0usize;
    let mut tick: u64 = 0;
    while done < n {
        let t = tick as f64 * dt;
        if t > deadline {
            return Err(format!("run stalled: {done} of {n} trips finished by t = {t:.1} s"));
        }

        // Admission. Pending vehicles are considered in schedule order;
        // the first one per approach that cannot enter safely closes that
        // approach for this step, keeping each lane queue first-in
        // first-out.
        let mut closed = [false; 4];
        let mut admitted_any = false;
        for i in 0..n {
            if progress[i].entry.is_some() || fleet[i].scheduled_entry > t + 1e-9 {
                continue;
            }
            let lane = leg_slot(routes[i].entry_leg);
            if closed[lane] {
                continue;
            }
            if entry_blocked(i, fleet[i].v_entry, &cores, &routes, &geoms, &cfg.ed) {
                closed[lane] = true;
                continue;
            }
            cores[i] = VehicleCore {
                id: i,
                x: 0.0,
                v: fleet[i].v_entry,
                a: 0.0,
                entry_time: t,
                absent: false,
            };
            progress[i].entry = Some(t);
            if let Some(tg) = targets {
                progress[i].ed = Some(EdState::new(tg[i].0, tg[i].1));
            }
            entries.push(EntryRecord { id: i, entry_time: t, route: routes[i] });
            admitted_any = true;
        }
        if admitted_any {
            order = crossing_order(&entries, cfg.tie_window);
            // Predecessor lists only grow: a vehicle demoted by a tie
            // keeps its old constraints and gains the newcomer's.
            for &id in order.ids() {
                let mut merged = preds[id].clone();
                merged.extend_from_slice(order.predecessors(id));
                merged.sort_by_key(|&p| order.rank(p));
                merged.dedup();
                preds[id] = merged;
            }
        }

        // Decisions, highest priority first, so lower-priority vehicles
        // react to accelerations and plans committed this same step.
        let order_ids: Vec<VehicleId> = order.ids().to_vec();
        for &i in &order_ids {
            if cores[i].absent {
                continue;
            }
            let (a_cmd, motion, publish) = {
                let view = WorldView {
                    t,
                    order: &order,
                    cores: &cores,
                    routes: &routes,
                    geoms: &geoms,
                    preds: &preds,
                    table: &table,
                    passages: &passages,
                    intentions: &intentions,
                };
                match coop {
                    None => {
                        let a = idm_intersection_step(
                            &cores[i],
                            progress[i].v_desired,
                            &view,
                            &cfg.idm,
                            &cfg.ed,
                        );
                        (a, Motion::Const(a), None)
                    }
                    Some(c) => {
                        if c == Cooperation::Cooperative {
                            debug_assert!(
                                preds[i]
                                    .iter()
                                    .all(|&p| cores[p].absent || view.intentions.get(p).is_some()),
                                "vehicle {i} decided before a live predecessor published"
                            );
                        }
                        let st = progress[i].ed.as_mut().expect("planner state for an ED run");
                        let out = ed_step(&cores[i], st, c, &view, &cfg.ed);
                        let motion =
                            if out.use_plan { Motion::PlanTail } else { Motion::Const(out.accel) };
                        (out.accel, motion, out.publish)
                    }
                }
            };
            cores[i].a = a_cmd;
            motions[i] = motion;
            if let Some(intent) = publish {
                intentions.publish(intent);
            }
            if progress[i].planned_energy.is_none() {
                if let Some(plan) = progress[i].ed.as_ref().and_then(|st| st.plan.as_ref()) {
                    progress[i].planned_energy = Some(plan.profile.energy(&cfg.ed.pt));
                }
            }
            log.rows.push(LogRow {
                t,
                id: i,
                route: routes[i],
                x: cores[i].x,
                v: cores[i].v,
                a: a_cmd,
                p: battery_power(a_cmd + cfg.ed.pt.h, cores[i].v, &cfg.ed.pt),
            });
        }

        // Integration over [t, t + dt).
        for &i in &order_ids {
            if cores[i].absent {
                continue;
            }
            advance(
                i,
                t,
                dt,
                &mut cores,
                &mut progress,
                &motions,
                &routes,
                &geoms,
                &cross_marks,
                &mut passages,
                &mut intentions,
                &mut log,
                &cfg.ed,
                &mut done,
            )?;
        }
        tick += 1;
    }

    log.sort();
    let mut rep = check_safety(&log, &cfg.spec, &cfg.ed);

    let mut vehicles = Vec::with_capacity(n);
    let mut fleet_energy = 0.0;
    let mut trip_sum = 0.0;
    let mut fallbacks_total = 0u32;
    let mut queue_total = 0u32;
    for i in 0..n {
        let entry = progress[i].entry.ok_or_else(|| format!("vehicle {i} never entered"))?;
        let exit = progress[i].exit.ok_or_else(|| format!("vehicle {i} never exited"))?;
        let energy = SpeedProfile::from_pieces(&progress[i].arcs).energy(&cfg.ed.pt);
        let (queue_steps, fallbacks, overrun) = match &progress[i].ed {
            Some(st) => (st.queue_steps, st.fallbacks, st.overrun),
            None => (0, 0, false),
        };
        fallbacks_total += fallbacks;
        queue_total += queue_steps;
        fleet_energy += energy;
        trip_sum += exit - entry;
        vehicles.push(VehicleSummary {
            id: i,
            route: routes[i],
            scheduled_entry_s: fleet[i].scheduled_entry,
            entry_s: entry,
            trip_time_s: exit - entry,
            exit_speed_mps: cores[i].v,
            energy_j_per_kg: energy,
            planned_energy_j_per_kg: progress[i].planned_energy,
            queue_steps,
            fallbacks,
            overrun,
        });
    }
    rep.fallback_events = fallbacks_total;
    if fallbacks_total > 0 {
        rep.violations.push(format!("{fallbacks_total} emergency braking events"));
    }

    let summary = RunSummary {
        controller: kind,
        flow_veh_per_hr: cfg.flow_veh_per_hr,
        seed: cfg.seed,
        fleet_energy_j_per_kg: fleet_energy,
        mean_trip_time_s: trip_sum / n as f64,
        vehicles,
        fallback_events: fallbacks_total,
        queue_steps_total: queue_total,
    };
    Ok((log, rep, summary))
}

/// Entering at `v_e` must leave room to brake comfortably behind the
/// nearest vehicle still on the same approach lane.
fn entry_blocked(
    i: VehicleId,
    v_e: f64,
    cores: &[VehicleCore],
    routes: &[Route],
    geoms: &[PathGeometry],
    prm: &EdParams,
) -> bool {
    const COMFORT_BRAKE: f64 = 2.0;
    let mut gap = f64::INFINITY;
    let mut v_lead = 0.0;
    for j in 0..cores.len() {
        if j == i || cores[j].absent {
            continue;
        }
        if routes[j].entry_leg != routes[i].entry_leg || cores[j].x > geoms[j].d_div {
            continue;
        }
        if cores[j].x < gap {
            gap = cores[j].x;
            v_lead = cores[j].v;
        }
    }
    if !gap.is_finite() {
        return false;
    }
    let need = prm.s_min + (v_e * v_e - v_lead * v_lead).max(0.0) / (2.0 * COMFORT_BRAKE);
    gap < need
}

/// Advances one vehicle across [t, t + dt) along its chosen motion,
/// stamps every conflict point crossed during the step, and finishes the
/// trip when the path ends inside the step.
#[allow(clippy::too_many_arguments)]
fn advance(
    i: VehicleId,
    t: f64,
    dt: f64,
    cores: &mut [VehicleCore],
    progress: &mut [Progress],
    motions: &[Motion],
    routes: &[Route],
    geoms: &[PathGeometry],
    cross_marks: &[Vec<(f64, VehicleId)>],
    passages: &mut PassageLog,
    intentions: &mut IntentionStore,
    log: &mut TrajectoryLog,
    prm: &EdParams,
    done: &mut usize,
) -> Result<(), String> {
    let geom = &geoms[i];
    let x0 = cores[i].x;
    let v0 = cores[i].v;

    // The step's executed arcs in step-local time.
    let mut arcs: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(2);
    match motions[i] {
        Motion::Hold => return Ok(()),
        Motion::PlanTail => {
            let plan = progress[i]
                .ed
                .as_ref()
                .and_then(|st| st.plan.as_ref())
                .ok_or_else(|| format!("vehicle {i} told to follow a plan it does not have"))?;
            let k0 = t - plan.t0;
            let k1 = (k0 + dt).min(plan.profile.duration());
            for seg in &plan.profile.segments {
                let s0 = seg.t_start.max(k0);
                let s1 = (seg.t_start + seg.duration).min(k1);
                if s1 - s0 > 1e-12 {
                    arcs.push((
                        plan.profile.speed(s0),
                        plan.profile.accel(s0),
                        3.0 * seg.c[3],
                        s1 - s0,
                    ));
                }
            }
            if arcs.is_empty() {
                arcs.push((v0, 0.0, 0.0, dt));
            }
        }
        Motion::Const(a) => {
            if a < -1e-12 && v0 + a * dt < 0.0 {
                let t_stop = (v0 / -a).min(dt);
                if t_stop > 1e-12 {
                    arcs.push((v0, a, 0.0, t_stop));
                }
                if dt - t_stop > 1e-12 {
                    arcs.push((0.0, 0.0, 0.0, dt - t_stop));
                }
                if arcs.is_empty() {
                    arcs.push((0.0, 0.0, 0.0, dt));
                }
            } else {
                arcs.push((v0, a, 0.0, dt));
            }
        }
    }

    let step = SpeedProfile::from_pieces(&arcs);
    let span = step.duration();
    let moved = step.end_pos();
    let x_new = x0 + moved;

    // Conflict-point passages crossed this step, stamped for every
    // watcher route. Unadmitted watchers are included so the release is
    // already on record when they enter.
    for &(d_own, j) in &cross_marks[i] {
        if d_own <= x0 {
            continue;
        }
        if d_own > x_new {
            break;
        }
        passages.record_crossing(i, j, t + time_to(&step, d_own - x0, span, moved));
    }
    let d_clear = geom.d_merge + prm.merge_ds;
    if x0 < d_clear && d_clear <= x_new {
        passages.record_merge(i, t + time_to(&step, d_clear - x0, span, moved));
    }

    if x_new >= geom.total_len - 1e-9 {
        let k_exit = time_to(&step, geom.total_len - x0, span, moved);
        push_truncated(&mut progress[i].arcs, &arcs, k_exit);
        let t_exit = t + k_exit;
        let v_end = step.speed(k_exit).max(0.0);
        let a_end = step.accel(k_exit);
        cores[i].x = geom.total_len;
        cores[i].v = v_end;
        cores[i].absent = true;
        progress[i].exit = Some(t_exit);
        intentions.clear(i);
        log.rows.push(LogRow {
            t: t_exit,
            id: i,
            route: routes[i],
            x: geom.total_len,
            v: v_end,
            a: a_end,
            p: battery_power(a_end + prm.pt.h, v_end, &prm.pt),
        });
        *done += 1;
    } else {
        push_truncated(&mut progress[i].arcs, &arcs, span);
        cores[i].x = x_new;
        cores[i].v = step.speed(span).max(0.0);
    }
    Ok(())
}

/// Time within the step at which the vehicle reaches `dist`, falling back
/// to linear interpolation if the profile's own inverse declines.
fn time_to(step: &SpeedProfile, dist: f64, span: f64, moved: f64) -> f64 {
    match step.time_at_position(dist) {
        Some(k) => k.clamp(0.0, span),
        None => {
            if moved > 1e-12 {
                span * (dist / moved).clamp(0.0, 1.0)
            } else {
                span
            }
        }
    }
}

/// Appends `arcs` to `acc`, cut at step-local time `until`.
fn push_truncated(
    acc: &mut Vec<(f64, f64, f64, f64)>,
    arcs: &[(f64, f64, f64, f64)],
    until: f64,
) {
    let mut t0 = 0.0;
    for &(v, b, c, dur) in arcs {
        if t0 >= until - 1e-12 {
            break;
        }
        let take = dur.min(until - t0);
        if take > 1e-12 {
            acc.push((v, b, c, take));
        }
        t0 += dur;
    }
}

/// One line of the cross-controller comparison: seed-averaged fleet
/// outcomes at one (controller, flow) cell and the energy change against
/// the baseline controller at the same flow.
#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub controller: ControllerKind,
    pub flow_veh_per_hr: f64,
    pub seeds: Vec<u64>,
    pub mean_fleet_energy: f64,
    pub mean_trip_time_s: f64,
    /// Percent change in mean fleet energy against the baseline; negative
    /// saves energy.
    pub pct_vs_baseline: f64,
}

/// Builds the comparison table from completed runs. Every controller must
/// cover the same seeds at each flow (pairing), and the baseline must be
/// present at every flow that any other controller reports.
pub fn summarize(runs: &[RunSummary]) -> Result<Vec<ComparisonRow>, String> {
    let mut cells: Vec<(ControllerKind, f64, Vec<&RunSummary>)> = Vec::new();
    for r in runs {
        match cells
            .iter_mut()
            .find(|(k, f, _)| *k == r.controller && *f == r.flow_veh_per_hr)
        {
            Some((_, _, v)) => v.push(r),
            None => cells.push((r.controller, r.flow_veh_per_hr, vec![r])),
        }
    }

    let mut flows: Vec<f64> = cells.iter().map(|(_, f, _)| *f).collect();
    flows.sort_by(f64::total_cmp);
    flows.dedup();

    let mut out = Vec::new();
    for &flow in &flows {
        let mut seed_sets: Vec<Vec<u64>> = Vec::new();
        for (_, f, group) in &cells {
            if *f == flow {
                let mut seeds: Vec<u64> = group.iter().map(|r| r.seed).collect();
                seeds.sort_unstable();
                seed_sets.push(seeds);
            }
        }
        for w in seed_sets.windows(2) {
            if w[0] != w[1] {
                return Err(format!(
                    "controllers at flow {flow} use different seed sets: {:?} vs {:?}",
                    w[0], w[1]
                ));
            }
        }
        let base = cells
            .iter()
            .find(|(k, f, _)| *k == ControllerKind::Idm && *f == flow)
            .map(|(_, _, group)| mean(group.iter().map(|r| r.fleet_energy_j_per_kg)))
            .ok_or_else(|| format!("no baseline runs at flow {flow}"))?;

        for kind in [ControllerKind::Idm, ControllerKind::NcEd, ControllerKind::CEd] {
            if let Some((_, _, group)) = cells.iter().find(|(k, f, _)| *k == kind && *f == flow) {
                let energy = mean(group.iter().map(|r| r.fleet_energy_j_per_kg));
                let trip = mean(group.iter().map(|r| r.mean_trip_time_s));
                let mut seeds: Vec<u64> = group.iter().map(|r| r.seed).collect();
                seeds.sort_unstable();
                out.push(ComparisonRow {
                    controller: kind,
                    flow_veh_per_hr: flow,
                    seeds,
                    mean_fleet_energy: energy,
                    mean_trip_time_s: trip,
                    pct_vs_baseline: 100.0 * (energy - base) / base,
                });
            }
        }
    }
    Ok(out)
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for v in values {
        sum += v;
        count += 1;
    }
    sum / count.max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Leg, Movement};

    fn small_cfg(n: usize, flow: f64, seed: u64) -> ScenarioConfig {
        ScenarioConfig { n_vehicles: n, flow_veh_per_hr: flow, seed, ..ScenarioConfig::default() }
    }

    fn veh(t: f64, route: Route, v: f64) -> ScenarioVehicle {
        ScenarioVehicle { scheduled_entry: t, route, v_entry: v, v_exit: v }
    }

    #[test]
    fn debug_lone_nc() {
        let cfg = small_cfg(1, 800.0, 1);
        let route = Route::new(Leg::West, Movement::Through);
        let fleet = vec![veh(1.0, route, 8.0)];
        let (log, rep, sum) = run_fleet(&cfg, ControllerKind::NcEd, &fleet).unwrap();
        for r in &log.rows {
            println!("{:6.2} x={:8.3} v={:6.3} a={:7.3}", r.t, r.x, r.v, r.a);
        }
        println!("viol {:?}", rep.violations);
        println!("trip {} fallbacks {}", sum.vehicles[0].trip_time_s, sum.fallback_events);
    }

    #[test]
    fn config_validation_names_the_offending_field() {
        let mut cfg = small_cfg(5, 1200.0, 1);
        cfg.speed_halfwidth = 9.0;
        let err = cfg.validate().unwrap_err();
        assert!(err.contains("speed_halfwidth"), "{err}");
        cfg = small_cfg(5, -3.0, 1);
        assert!(cfg.validate().unwrap_err().contains("flow_veh_per_hr"));
    }

    #[test]
    fn single_vehicle_completes_under_every_controller() {
        let cfg = small_cfg(1, 800.0, 1);
        let route = Route::new(Leg::West, Movement::Through);
        let fleet = vec![veh(1.0, route, 8.0)];
        let len = cfg.spec.path(route).total_len;
        let mut trip_idm = 0.0;
        for kind in [ControllerKind::Idm, ControllerKind::NcEd, ControllerKind::CEd] {
            let (log, rep, sum) = run_fleet(&cfg, kind, &fleet).unwrap();
            assert!(rep.passed(), "{kind:?}: {:?}", rep.violations);
            assert_eq!(sum.vehicles.len(), 1);
            let last = log.rows.last().unwrap();
            assert!((last.x - len).abs() < 0.5, "{kind:?} ended at {}", last.x);
            match kind {
                ControllerKind::Idm => trip_idm = sum.vehicles[0].trip_time_s,
                _ => {
                    let trip = sum.vehicles[0].trip_time_s;
                    assert!(
                        (trip - trip_idm).abs() <= 2.0 * cfg.ed.period + 1e-9,
                        "{kind:?} trip {trip} vs prescribed {trip_idm}"
                    );
                    assert_eq!(sum.fallback_events, 0);
                }
            }
        }
    }

    #[test]
    fn lone_planner_executes_its_first_plan() {
        // An unconflicted planning vehicle should track the trajectory it
        // committed to at entry, and the executed energy should match the
        // closed-form plan energy.
        let cfg = small_cfg(1, 800.0, 1);
        let route = Route::new(Leg::South, Movement::Through);
        let fleet = vec![veh(0.0, route, 8.0)];
        let (log, rep, sum) = run_fleet(&cfg, ControllerKind::CEd, &fleet).unwrap();
        assert!(rep.passed(), "{:?}", rep.violations);
        let v = &sum.vehicles[0];
        let planned = v.planned_energy_j_per_kg.expect("first plan energy");
        assert!(
            (v.energy_j_per_kg - planned).abs() < 1e-3 * planned.abs().max(1.0),
            "executed {} vs planned {}",
            v.energy_j_per_kg,
            planned
        );
        assert!(rep.max_integration_defect < 1e-6, "defect {}", rep.max_integration_defect);
        let _ = log;
    }

    #[test]
    fn blocked_entry_is_deferred_not_overlapped() {
        let cfg = small_cfg(2, 800.0, 1);
        let route = Route::new(Leg::North, Movement::Through);
        // Second arrival 0.2 s behind the first: far too close to enter.
        let fleet = vec![veh(0.0, route, 9.0), veh(0.2, route, 9.0)];
        let (_, rep, sum) = run_fleet(&cfg, ControllerKind::Idm, &fleet).unwrap();
        assert!(rep.passed(), "{:?}", rep.violations);
        let second = &sum.vehicles[1];
        assert!(
            second.entry_s > second.scheduled_entry_s + 1.0,
            "entry {} vs schedule {}",
            second.entry_s,
            second.scheduled_entry_s
        );
        assert!(rep.min_same_path_gap >= cfg.ed.s_min - AUDIT_TOL);
    }

    #[test]
    fn crossing_traffic_is_separated_in_time() {
        let cfg = small_cfg(2, 800.0, 1);
        // Perpendicular through movements entering simultaneously.
        let fleet = vec![
            veh(0.0, Route::new(Leg::West, Movement::Through), 8.3),
            veh(0.0, Route::new(Leg::South, Movement::Through), 8.3),
        ];
        for kind in [ControllerKind::Idm, ControllerKind::NcEd, ControllerKind::CEd] {
            let (_, rep, sum) = run_fleet(&cfg, kind, &fleet).unwrap();
            assert!(rep.passed(), "{kind:?}: {:?}", rep.violations);
            assert!(
                rep.min_crossing_separation >= cfg.ed.lateral_dt - AUDIT_TOL,
                "{kind:?} separation {}",
                rep.min_crossing_separation
            );
            assert_eq!(sum.vehicles.len(), 2);
        }
    }

    #[test]
    fn runs_are_bit_identical() {
        let cfg = small_cfg(6, 1200.0, 2);
        let (log_a, _, _) = run(&cfg, ControllerKind::CEd).unwrap();
        let (log_b, _, _) = run(&cfg, ControllerKind::CEd).unwrap();
        assert_eq!(log_a.to_csv(), log_b.to_csv());
    }

    #[test]
    fn small_fleet_is_safe_under_every_controller() {
        let cfg = small_cfg(8, 1600.0, 3);
        for kind in [ControllerKind::Idm, ControllerKind::NcEd, ControllerKind::CEd] {
            let (_, rep, sum) = run(&cfg, kind).unwrap();
            assert!(rep.passed(), "{kind:?}: {:?}", rep.violations);
            assert_eq!(sum.vehicles.len(), 8, "{kind:?} lost vehicles");
        }
    }

    #[test]
    fn planned_trips_match_prescribed_durations() {
        let cfg = small_cfg(6, 1200.0, 1);
        let (_, _, base) = run(&cfg, ControllerKind::Idm).unwrap();
        for kind in [ControllerKind::NcEd, ControllerKind::CEd] {
            let (_, rep, sum) = run(&cfg, kind).unwrap();
            assert!(rep.passed(), "{kind:?}: {:?}", rep.violations);
            for (v, b) in sum.vehicles.iter().zip(&base.vehicles) {
                assert!(
                    (v.trip_time_s - b.trip_time_s).abs() <= 2.0 * cfg.ed.period + 1e-9,
                    "{kind:?} vehicle {} trip {} vs prescribed {}",
                    v.id,
                    v.trip_time_s,
                    b.trip_time_s
                );
            }
        }
    }

    #[test]
    fn summarize_pairs_seeds_and_reports_percentages() {
        let mk = |kind, flow, seed, energy| RunSummary {
            controller: kind,
            flow_veh_per_hr: flow,
            seed,
            fleet_energy_j_per_kg: energy,
            mean_trip_time_s: 15.0,
            vehicles: Vec::new(),
            fallback_events: 0,
            queue_steps_total: 0,
        };
        let runs = vec![
            mk(ControllerKind::Idm, 800.0, 1, 100.0),
            mk(ControllerKind::Idm, 800.0, 2, 110.0),
            mk(ControllerKind::CEd, 800.0, 1, 80.0),
            mk(ControllerKind::CEd, 800.0, 2, 78.0),
        ];
        let rows = summarize(&runs).unwrap();
        assert_eq!(rows.len(), 2);
        assert!((rows[0].pct_vs_baseline - 0.0).abs() < 1e-12);
        let ced = &rows[1];
        assert_eq!(ced.controller, ControllerKind::CEd);
        assert!((ced.mean_fleet_energy - 79.0).abs() < 1e-12);
        assert!((ced.pct_vs_baseline - (100.0 * (79.0 - 105.0) / 105.0)).abs() < 1e-12);

        let broken = vec![
            mk(ControllerKind::Idm, 800.0, 1, 100.0),
            mk(ControllerKind::CEd, 800.0, 2, 80.0),
        ];
        assert!(summarize(&broken).is_err());
    }
}
