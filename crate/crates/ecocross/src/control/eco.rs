//! Energy-optimal planners with two information models.
//!
//! Both variants re-solve a shrinking-horizon optimal control problem
//! every control period and drive the vehicle along the winning profile.
//! The non-cooperative variant predicts other vehicles from measured
//! instantaneous accelerations and only engages crossing and merging
//! constraints once the vehicle reaches its visibility point, where its
//! speed is pinned. The cooperative variant reads published plans: rear
//! bounds use the plan's mean acceleration over a preview window, and
//! arrival times at shared points come straight from the plans, starting
//! at admission with no visibility slowdown.
//!
//! Measured predictions extrapolate a constant acceleration. A
//! deceleration extrapolated forever would reverse the predicted motion,
//! so every prediction is truncated where the predicted vehicle would
//! stop, and trusted no longer than the preview window. A prediction
//! whose stop blocks the remaining trip cannot be planned against at
//! all: the vehicle queues behind the blockage with a proportional
//! approach law until the picture changes.

use super::{
    future_mean_accel, turn_envelope, EdParams, Intention, VehicleCore, WorldView,
};
use crate::conflicts::{
    conflict_sets_of, effective_conflicts, enumerate_candidates, CandidateSet,
    ConflictSets, RearKind, TurnSpec, VehicleId,
};
use crate::geometry::Movement;
use crate::ocp::car_following::LeaderPrediction;
use crate::ocp::compose::{compose_multi, turn_speed, ComposeProblem, Junction, TailBound};
use crate::ocp::profile::SpeedProfile;
use crate::ocp::OcpError;

/// Information model of the planner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cooperation {
    NonCooperative,
    Cooperative,
}

/// A solved trajectory anchored in absolute time and path position.
#[derive(Debug, Clone)]
pub struct Plan {
    pub t0: f64,
    pub x0: f64,
    pub profile: SpeedProfile,
}

impl Plan {
    pub fn position(&self, t: f64) -> f64 {
        self.x0 + self.profile.position(t - self.t0)
    }

    pub fn speed(&self, t: f64) -> f64 {
        self.profile.speed(t - self.t0)
    }

    pub fn accel(&self, t: f64) -> f64 {
        self.profile.accel(t - self.t0)
    }

    pub fn end_time(&self) -> f64 {
        self.t0 + self.profile.duration()
    }
}

/// Per-vehicle planner state across control steps.
#[derive(Debug, Clone)]
pub struct EdState {
    /// Prescribed trip duration, seconds.
    pub total_time: f64,
    /// Prescribed terminal speed, m/s.
    pub final_speed: f64,
    pub plan: Option<Plan>,
    /// Steps where no candidate was feasible and the vehicle braked.
    pub fallbacks: u32,
    /// Steps spent queueing behind a predicted blockage.
    pub queue_steps: u32,
    /// Steps that rode the existing plan instead of re-solving.
    pub resolve_skipped: u32,
    /// The prescribed duration expired before the trip ended.
    pub overrun: bool,
}

impl EdState {
    pub fn new(total_time: f64, final_speed: f64) -> Self {
        EdState {
            total_time,
            final_speed,
            plan: None,
            fallbacks: 0,
            queue_steps: 0,
            resolve_skipped: 0,
            overrun: false,
        }
    }
}

/// How the simulator should advance the vehicle this step.
#[derive(Debug, Clone)]
pub struct StepOut {
    /// Acceleration at the step start, as observed by others.
    pub accel: f64,
    /// Follow the stored plan exactly; otherwise integrate `accel` as a
    /// constant with the speed clamped at zero.
    pub use_plan: bool,
    pub queued: bool,
    pub fell_back: bool,
    /// Plan broadcast for the cooperative store, applied by the caller.
    pub publish: Option<Intention>,
}

/// Outcome of screening one predicted bound.
enum Screen {
    /// Nothing binding.
    Free,
    /// A usable windowed bound.
    Bound(LeaderPrediction),
    /// The prediction parks in the way of the remaining trip; the value
    /// is the reachable ceiling in the local frame.
    Blocked(f64),
}

/// A junction pin to impose besides the conflict constraints.
#[derive(Clone, Copy)]
struct Pin {
    dist: f64,
    speed: f64,
}

/// Everything of the merge constraint a candidate solve needs.
#[derive(Clone, Copy)]
struct MergePlanInput {
    /// Merge point in the local frame, meters.
    dist: f64,
    /// Earliest passage in local time, seconds.
    k_pin: f64,
    bound: Option<LeaderPrediction>,
}

/// Minimum pin separation along the path; junctions closer than this to
/// each other or to the trip ends are degenerate.
const PIN_CLEARANCE: f64 = 0.25;
/// Tolerance when screening a candidate against constraints it did not
/// impose.
const AUDIT_TOL: f64 = 1e-6;
/// Gap sampling step for rear-bound screening, seconds.
const AUDIT_STEP: f64 = 0.005;

/// Smallest nonnegative time at which a constant-acceleration motion from
/// `(x0, v0)` reaches `target`, `None` when it stops short.
fn reach_time(x0: f64, v0: f64, a: f64, target: f64) -> Option<f64> {
    let d = target - x0;
    if d <= 0.0 {
        return Some(0.0);
    }
    if a.abs() < 1e-12 {
        return if v0 > 1e-12 { Some(d / v0) } else { None };
    }
    let disc = v0 * v0 + 2.0 * a * d;
    if a > 0.0 {
        return Some((disc.sqrt() - v0) / a);
    }
    if disc < 0.0 {
        return None;
    }
    let k = (v0 - disc.sqrt()) / -a;
    (k >= 0.0).then_some(k)
}

/// Applies the stop truncation and preview cap to a raw constant
/// acceleration bound. `need` is the distance the subject must still
/// cover; a bound whose reachable ceiling falls short of it blocks the
/// trip instead of constraining it.
fn screen_bound(x_p: f64, v_p: f64, a_p: f64, window: f64, need: f64) -> Screen {
    if window <= 1e-9 {
        return Screen::Free;
    }
    if a_p < -1e-12 {
        let k_stop = v_p / -a_p;
        if k_stop < window {
            let ceiling = x_p + 0.5 * v_p * k_stop;
            if ceiling < need - 1e-6 {
                return Screen::Blocked(ceiling);
            }
            if k_stop <= 1e-9 {
                return Screen::Free;
            }
            return Screen::Bound(LeaderPrediction {
                x_p,
                v_p,
                a_p,
                valid_until: k_stop,
            });
        }
    }
    Screen::Bound(LeaderPrediction { x_p, v_p, a_p, valid_until: window })
}

/// Predicted acceleration of vehicle `j`: its measured instantaneous
/// value, or the mean of its published plan over the preview window when
/// plans are shared and one is available.
fn predicted_accel(j: VehicleId, world: &WorldView, coop: Cooperation, prm: &EdParams) -> f64 {
    if coop == Cooperation::Cooperative {
        if let Some(intent) = world.intentions.get(j) {
            if let Some(a) = future_mean_accel(intent, world.t, prm.preview) {
                return a;
            }
        }
    }
    world.cores[j].a
}

/// Proportional approach toward a stop `gap` meters ahead: track the
/// comfortable-braking speed envelope, capped at `v_ref`, with full brake
/// authority but gentle launch.
fn creep_accel(v: f64, gap: f64, v_ref: f64, a_max: f64) -> f64 {
    let brake = 2.0;
    let hold_back = 0.5;
    let v_env = (2.0 * brake * (gap - hold_back).max(0.0))
        .sqrt()
        .min(v_ref.max(0.5));
    ((v_env - v) / 0.5).clamp(-a_max, 0.5 * a_max)
}

/// One control decision for a planning vehicle.
pub fn ed_step(
    me: &VehicleCore,
    st: &mut EdState,
    coop: Cooperation,
    world: &WorldView,
    prm: &EdParams,
) -> StepOut {
    let geom = &world.geoms[me.id];
    let elapsed = world.t - me.entry_time;
    let t_rem = st.total_time - elapsed;
    let d_rem = geom.total_len - me.x;

    if d_rem <= 1e-9 {
        return StepOut {
            accel: 0.0,
            use_plan: false,
            queued: false,
            fell_back: false,
            publish: None,
        };
    }

    // The prescribed duration ran out with road left: finish at a steady
    // pace under the same approach law as queueing, but without counting
    // the steps as queued.
    if t_rem <= 1e-9 {
        st.overrun = true;
        let mut out = queue_like_step(me, st, coop, world, prm, f64::INFINITY, false);
        out.queued = false;
        return out;
    }

    // Near the end of the horizon the remaining plan is ridden out; tiny
    // re-solves add nothing and degenerate numerically.
    if t_rem <= prm.coast_guard {
        if let Some(plan) = &st.plan {
            if plan.end_time() >= world.t + t_rem - 1e-6 {
                st.resolve_skipped += 1;
                let accel = plan.accel(world.t);
                return StepOut {
                    accel,
                    use_plan: true,
                    queued: false,
                    fell_back: false,
                    publish: None,
                };
            }
        }
    }

    let sets = live_conflict_sets(me, world);

    // Rear-end member: the nearest same-lane predecessor, diverging or
    // car-following, with its binding window.
    let rear_member = {
        let pos = |id: VehicleId| world.preds[me.id].iter().position(|&x| x == id);
        let cf = sets.cf.last().map(|&j| (j, RearKind::CarFollowing));
        let dc = sets.dc.last().map(|&j| (j, RearKind::Diverging));
        match (cf, dc) {
            (Some(a), Some(b)) => Some(if pos(a.0) > pos(b.0) { a } else { b }),
            (a, b) => a.or(b),
        }
    };

    let visibility_x = geom.d_div - prm.d_vis_back;
    let sees_junction = coop == Cooperation::Cooperative || me.x >= visibility_x;

    let mut blocked_walls: Vec<f64> = Vec::new();

    let rear_bound = match rear_member {
        None => None,
        Some((j, kind)) => {
            let other = &world.cores[j];
            let a_pred = predicted_accel(j, world, coop, prm);
            let raw_window = match kind {
                RearKind::CarFollowing => t_rem,
                RearKind::Diverging => {
                    reach_time(other.x, other.v, a_pred, world.geoms[j].d_div)
                        .unwrap_or(f64::INFINITY)
                }
            };
            let window = raw_window.min(prm.preview).min(t_rem);
            let x_p = other.x - me.x - prm.s_min;
            match screen_bound(x_p, other.v, a_pred, window, d_rem) {
                Screen::Blocked(c) => {
                    blocked_walls.push(c);
                    None
                }
                Screen::Bound(b) => Some(b),
                Screen::Free => None,
            }
        }
    };

    // Merging member: earliest passage of the merge point plus the
    // exit-lane bound behind the merged leader.
    let mut merge_input: Option<MergePlanInput> = None;
    if sees_junction {
        if let Some(&e) = sets.mc.last() {
            let other = &world.cores[e];
            let e_geom = &world.geoms[e];
            let a_pred = predicted_accel(e, world, coop, prm);
            let offset_target = e_geom.d_merge + prm.merge_ds;
            let k_e_abs = match world.passages.merge(e) {
                Some(tp) => Some(tp),
                None => match coop {
                    Cooperation::Cooperative => world.intentions.get(e).and_then(|intent| {
                        intent
                            .merge_offset_arrival
                            .or_else(|| intent.arrival_at(offset_target))
                    }),
                    Cooperation::NonCooperative => {
                        reach_time(other.x, other.v, a_pred, offset_target)
                            .map(|k| world.t + k)
                    }
                },
            };
            let merge_loc = geom.d_merge - me.x;
            match k_e_abs {
                None => blocked_walls.push(merge_loc - prm.s_min),
                Some(abs) => {
                    let k_pin = (abs - world.t).max(0.0);
                    if k_pin >= t_rem - prm.coast_guard {
                        blocked_walls.push(merge_loc - prm.s_min);
                    } else {
                        let x_p = (other.x - e_geom.d_merge) + merge_loc - prm.s_min;
                        let window = prm.preview.min(t_rem);
                        let bound = match screen_bound(x_p, other.v, a_pred, window, d_rem) {
                            Screen::Blocked(c) => {
                                blocked_walls.push(c);
                                None
                            }
                            Screen::Bound(b) => Some(b),
                            Screen::Free => None,
                        };
                        merge_input = Some(MergePlanInput { dist: merge_loc, k_pin, bound });
                    }
                }
            }
        }
    }

    // Crossing pairs in the local frame: shared-point distance and the
    // earliest local passage time. A pair whose conflicting vehicle is
    // predicted to never arrive blocks entry instead.
    let mut crossings: Vec<(VehicleId, f64, f64)> = Vec::new();
    if sees_junction {
        for &(c, own_d, other_d) in &sets.cc {
            let own_loc = own_d - me.x;
            let earliest_abs = match world.passages.crossing(c, me.id) {
                Some(tp) => Some(tp + prm.lateral_dt),
                None => {
                    let other = &world.cores[c];
                    match coop {
                        Cooperation::Cooperative => world
                            .intentions
                            .get(c)
                            .and_then(|intent| {
                                intent
                                    .crossing_arrivals
                                    .iter()
                                    .find(|&&(s, _)| s == me.id)
                                    .map(|&(_, t)| t)
                                    .or_else(|| intent.arrival_at(other_d))
                            })
                            .map(|t| t + prm.lateral_dt),
                        Cooperation::NonCooperative => {
                            let a_pred = predicted_accel(c, world, coop, prm);
                            reach_time(other.x, other.v, a_pred, other_d)
                                .map(|k| world.t + k + prm.lateral_dt)
                        }
                    }
                }
            };
            match earliest_abs {
                None => blocked_walls.push(own_loc - prm.s_min),
                Some(abs) => {
                    let k_min = abs - world.t;
                    if k_min >= t_rem - prm.coast_guard && own_loc > PIN_CLEARANCE {
                        blocked_walls.push(own_loc - prm.s_min);
                    } else {
                        crossings.push((c, own_loc, k_min));
                    }
                }
            }
        }
    }

    if !blocked_walls.is_empty() {
        let mut wall = blocked_walls.iter().copied().fold(f64::INFINITY, f64::min);
        if let Some(b) = &rear_bound {
            wall = wall.min(b.x_p);
        }
        return queue_like_step(me, st, coop, world, prm, wall, true);
    }

    // Pins imposed on every candidate: the visibility speed for the
    // non-cooperative planner, the midpoint speed of a turn.
    let mut pins: Vec<Pin> = Vec::new();
    if coop == Cooperation::NonCooperative && me.x < visibility_x - PIN_CLEARANCE {
        pins.push(Pin { dist: visibility_x - me.x, speed: prm.v_vis });
    }
    let mut turn_spec: Option<TurnSpec> = None;
    if world.routes[me.id].movement != Movement::Through {
        let mid = 0.5 * geom.total_len;
        if me.x < mid - PIN_CLEARANCE {
            let v_tr = turn_speed(geom.v_safe, geom.arc_len, prm.lim.a_max);
            pins.push(Pin { dist: mid - me.x, speed: v_tr });
            turn_spec = Some(TurnSpec { mid_dist: mid - me.x, v_turn: v_tr });
        }
    }

    let vf = st.final_speed;
    let v_now = me.v;
    let solve = |set: CandidateSet, seed: Option<usize>, base: Option<&SpeedProfile>| {
        solve_candidate(
            v_now,
            vf,
            d_rem,
            t_rem,
            &pins,
            if set.rear { rear_bound } else { None },
            if set.merge { merge_input } else { None },
            &crossings,
            if set.cross { seed } else { None },
            base,
            prm,
        )
    };

    let base = match solve(CandidateSet::default(), None, None) {
        Ok(sol) => sol,
        Err(e) => {
            eprintln!(
                "BASE-FAIL t={:.2} x={:.3} v={:.3} t_rem={:.4} d_rem={:.4} pins={:?} err={:?}",
                world.t,
                me.x,
                me.v,
                t_rem,
                d_rem,
                pins.iter().map(|p| (p.dist, p.speed)).collect::<Vec<_>>(),
                e
            );
            return fallback_step(me, st, coop, world, prm);
        }
    };

    // Selection runs in the local frame, so the crossing distances the
    // sets carry are shifted before the margins are measured.
    let local_sets = ConflictSets {
        dc: sets.dc.clone(),
        mc: sets.mc.clone(),
        cc: sets
            .cc
            .iter()
            .map(|&(c, own_d, other_d)| (c, own_d - me.x, other_d))
            .collect(),
        cf: sets.cf.clone(),
    };
    let mut assignment = effective_conflicts(
        &world.preds[me.id],
        &local_sets,
        &base.0,
        |c, _, _| {
            crossings
                .iter()
                .find(|&&(id, _, _)| id == c)
                .map(|&(_, _, k_min)| k_min)
        },
        turn_spec,
    );
    if rear_bound.is_none() {
        assignment.rear = None;
    }
    if merge_input.is_none() {
        assignment.merge = None;
    }
    let seed_cross = assignment
        .cross
        .and_then(|(c, _, _)| crossings.iter().position(|&(id, _, _)| id == c));

    let mut best: Option<(SpeedProfile, f64)> = None;
    for set in enumerate_candidates(&assignment) {
        let sol = if set == CandidateSet::default() {
            Ok(base.clone())
        } else {
            solve(set, seed_cross, Some(&base.0))
        };
        let Ok((profile, energy)) = sol else { continue };
        if !audit_candidate(&profile, rear_bound.as_ref(), merge_input.as_ref(), &crossings, prm)
        {
            continue;
        }
        if best.as_ref().map_or(true, |(_, e)| energy < *e) {
            best = Some((profile, energy));
        }
    }

    let Some((profile, _)) = best else {
        eprintln!(
            "CAND-FAIL t={:.2} x={:.3} v={:.3} t_rem={:.4} d_rem={:.4}",
            world.t, me.x, me.v, t_rem, d_rem
        );
        return fallback_step(me, st, coop, world, prm);
    };

    let accel = profile.accel(0.0);
    st.plan = Some(Plan { t0: world.t, x0: me.x, profile });
    let publish = (coop == Cooperation::Cooperative).then(|| {
        let plan = st.plan.as_ref().unwrap();
        build_intention(me, world, prm, plan.t0, plan.x0, plan.profile.clone())
    });
    StepOut { accel, use_plan: true, queued: false, fell_back: false, publish }
}

/// Conflict sets against the frozen predecessors, with members dropped
/// once their conflict can no longer bind: exited rear vehicles, diverging
/// vehicles past their diverge point, merging vehicles that left, and
/// crossing pairs whose shared point the subject already passed.
fn live_conflict_sets(me: &VehicleCore, world: &WorldView) -> ConflictSets {
    let mut sets = conflict_sets_of(
        world.routes[me.id],
        &world.preds[me.id],
        world.routes,
        world.table,
    );
    sets.cf.retain(|&j| !world.cores[j].absent);
    sets.dc
        .retain(|&j| !world.cores[j].absent && world.cores[j].x < world.geoms[j].d_div);
    sets.mc.retain(|&j| !world.cores[j].absent);
    sets.cc.retain(|&(_, own_d, _)| me.x < own_d);
    sets
}

/// Queue behind `wall` meters of clear road (or cruise when unbounded):
/// proportional approach, turn envelope respected, plan dropped. Also the
/// motion law for an expired horizon.
fn queue_like_step(
    me: &VehicleCore,
    st: &mut EdState,
    coop: Cooperation,
    world: &WorldView,
    prm: &EdParams,
    wall: f64,
    queued: bool,
) -> StepOut {
    let geom = &world.geoms[me.id];
    let v_ref = st.final_speed.min(turn_envelope(me.x, geom, 2.0, 0.15));
    let accel = creep_accel(me.v, wall, v_ref, prm.lim.a_max);
    if queued {
        st.queue_steps += 1;
    }
    st.plan = None;
    let publish =
        (coop == Cooperation::Cooperative).then(|| motion_intention(me, world, prm, accel));
    StepOut { accel, use_plan: false, queued, fell_back: false, publish }
}

/// No feasible candidate: brake hard and retry next step.
fn fallback_step(
    me: &VehicleCore,
    st: &mut EdState,
    coop: Cooperation,
    world: &WorldView,
    prm: &EdParams,
) -> StepOut {
    st.fallbacks += 1;
    st.plan = None;
    let accel = -prm.lim.a_max;
    let publish =
        (coop == Cooperation::Cooperative).then(|| motion_intention(me, world, prm, accel));
    StepOut { accel, use_plan: false, queued: false, fell_back: true, publish }
}

/// Solves one constraint subset. Crossing pins are activated iteratively
/// starting from the seed: imposing one passage can push the profile past
/// another pair's earliest time.
#[allow(clippy::too_many_arguments)]
fn solve_candidate(
    v0: f64,
    vf: f64,
    dist: f64,
    horizon: f64,
    pins: &[Pin],
    rear: Option<LeaderPrediction>,
    merge: Option<MergePlanInput>,
    crossings: &[(VehicleId, f64, f64)],
    seed_cross: Option<usize>,
    base: Option<&SpeedProfile>,
    prm: &EdParams,
) -> Result<(SpeedProfile, f64), OcpError> {
    let mut active: Vec<usize> = Vec::new();
    if let Some(seed) = seed_cross {
        active.push(seed);
    }
    loop {
        // Junctions ordered along the path; the merge one is tagged so the
        // tail bound can find its segment index after sorting.
        let mut junctions: Vec<(f64, Junction, bool)> = Vec::new();
        for pin in pins {
            junctions.push((
                pin.dist,
                Junction::at_dist_with_speed(pin.dist, pin.speed),
                false,
            ));
        }
        for &i in &active {
            let (_, d, k) = crossings[i];
            junctions.push((d, Junction::at_dist_and_time(d, k), false));
        }
        if let Some(m) = &merge {
            let t_free = base
                .and_then(|b| b.time_at_position(m.dist))
                .unwrap_or(horizon * m.dist / dist);
            let t_pin = m.k_pin.max(t_free);
            if t_pin >= horizon - 1e-6 {
                return Err(OcpError::Infeasible);
            }
            junctions.push((m.dist, Junction::at_dist_and_time(m.dist, t_pin), true));
        }
        junctions.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in junctions.windows(2) {
            if w[1].0 - w[0].0 < 1e-6 {
                return Err(OcpError::Infeasible);
            }
        }
        if let Some(first) = junctions.first() {
            if first.0 < 1e-6 || junctions.last().unwrap().0 > dist - 1e-6 {
                return Err(OcpError::Infeasible);
            }
        }

        let mut prob = ComposeProblem::new(v0, vf, dist, horizon);
        prob.lim = prm.lim;
        prob.pt = prm.pt;
        prob.rear = rear;
        for (i, &(_, j, is_merge)) in junctions.iter().enumerate() {
            prob.junctions.push(j);
            if is_merge {
                if let Some(b) = merge.as_ref().and_then(|m| m.bound) {
                    prob.tail = Some(TailBound { pred: b, first_segment: i + 1 });
                }
            }
        }

        let sol = compose_multi(&prob)?;

        let mut worst: Option<(usize, f64)> = None;
        if seed_cross.is_some() {
            for (i, &(_, d, k_min)) in crossings.iter().enumerate() {
                if active.contains(&i) {
                    continue;
                }
                let arr = sol.profile.time_at_position(d).unwrap_or(f64::INFINITY);
                let late = k_min - arr;
                if late > 1e-9 && worst.map_or(true, |(_, w)| late > w) {
                    worst = Some((i, late));
                }
            }
        }
        match worst {
            Some((i, _)) => active.push(i),
            None => return Ok((sol.profile, sol.energy)),
        }
    }
}

/// Screens a candidate against the full constraint set, imposed or not:
/// rear and exit-lane bounds sampled over their windows, every crossing
/// pair's earliest passage, the merge passage, and the motion limits.
fn audit_candidate(
    profile: &SpeedProfile,
    rear: Option<&LeaderPrediction>,
    merge: Option<&MergePlanInput>,
    crossings: &[(VehicleId, f64, f64)],
    prm: &EdParams,
) -> bool {
    if profile.min_speed() < -1e-9 || profile.max_abs_accel() > prm.lim.a_max + 1e-6 {
        return false;
    }
    let horizon = profile.duration();
    let sample_ok = |pred: &LeaderPrediction, from: f64| -> bool {
        let until = pred.valid_until.min(horizon);
        if from > until {
            return true;
        }
        let mut k = from;
        loop {
            let k_eval = k.min(until);
            if profile.position(k_eval) > pred.bound(k_eval) + AUDIT_TOL {
                return false;
            }
            if k >= until {
                return true;
            }
            k += AUDIT_STEP;
        }
    };
    if let Some(pred) = rear {
        if !sample_ok(pred, 0.0) {
            return false;
        }
    }
    for &(_, d, k_min) in crossings {
        let arr = profile.time_at_position(d).unwrap_or(f64::INFINITY);
        if arr < k_min - AUDIT_TOL {
            return false;
        }
    }
    if let Some(m) = merge {
        let arr = profile.time_at_position(m.dist).unwrap_or(f64::INFINITY);
        if arr < m.k_pin - AUDIT_TOL {
            return false;
        }
        if let Some(b) = &m.bound {
            if !sample_ok(b, arr.max(0.0)) {
                return false;
            }
        }
    }
    true
}

/// A truthful constant-acceleration stand-in for steps without a plan, so
/// cooperative followers keep reading real motion while this vehicle
/// queues or recovers. The profile holds at the standstill instead of
/// reversing.
fn motion_intention(me: &VehicleCore, world: &WorldView, prm: &EdParams, accel: f64) -> Intention {
    let span = prm.preview.max(1.0);
    let profile = if accel < -1e-9 && me.v + accel * span < 0.0 {
        let k_stop = me.v / -accel;
        SpeedProfile::from_pieces(&[
            (me.v, accel, 0.0, k_stop),
            (0.0, 0.0, 0.0, span - k_stop),
        ])
    } else {
        SpeedProfile::single(me.v, accel, 0.0, span)
    };
    build_intention(me, world, prm, world.t, me.x, profile)
}

/// Packages a profile as a broadcast: the plan itself plus the arrival
/// times at every shared point another vehicle in the zone may ask about.
fn build_intention(
    me: &VehicleCore,
    world: &WorldView,
    prm: &EdParams,
    t0: f64,
    x0: f64,
    profile: SpeedProfile,
) -> Intention {
    let geom = &world.geoms[me.id];
    let mut crossing_arrivals = Vec::new();
    for other in world.cores {
        if other.id == me.id || other.absent {
            continue;
        }
        if let Some((own_d, _)) = world.table.get(world.routes[me.id], world.routes[other.id]) {
            let local = own_d - x0;
            if local > 0.0 {
                if let Some(k) = profile.time_at_position(local) {
                    crossing_arrivals.push((other.id, t0 + k));
                }
            }
        }
    }
    let merge_offset_arrival = {
        let target = geom.d_merge + prm.merge_ds - x0;
        if target > 0.0 {
            profile.time_at_position(target).map(|k| t0 + k)
        } else {
            None
        }
    };
    Intention {
        owner: me.id,
        t0,
        x0,
        profile,
        crossing_arrivals,
        merge_offset_arrival,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conflicts::{crossing_order, CrossingOrder, EntryRecord};
    use crate::control::{IntentionStore, PassageLog};
    use crate::geometry::{CrossingTable, IntersectionSpec, Leg, PathGeometry, Route};
    use crate::ocp::unconstrained::solve_unconstrained;
    use crate::ocp::BoundaryConditions;

    struct Arena {
        order: CrossingOrder,
        cores: Vec<VehicleCore>,
        routes: Vec<Route>,
        geoms: Vec<PathGeometry>,
        preds: Vec<Vec<VehicleId>>,
        table: CrossingTable,
        passages: PassageLog,
        intentions: IntentionStore,
    }

    impl Arena {
        fn new(entries: &[(f64, Route, f64)]) -> Self {
            let spec = IntersectionSpec::default();
            let mut recs = Vec::new();
            let mut cores = Vec::new();
            let mut routes = Vec::new();
            let mut geoms = Vec::new();
            for (id, &(t, route, v)) in entries.iter().enumerate() {
                recs.push(EntryRecord { id, entry_time: t, route });
                cores.push(VehicleCore {
                    id,
                    x: 0.0,
                    v,
                    a: 0.0,
                    entry_time: t,
                    absent: false,
                });
                routes.push(route);
                geoms.push(spec.path(route));
            }
            let order = crossing_order(&recs, 0.5);
            let preds = (0..entries.len())
                .map(|id| order.predecessors(id).to_vec())
                .collect();
            Arena {
                order,
                cores,
                routes,
                geoms,
                preds,
                table: spec.crossing_table().unwrap(),
                passages: PassageLog::default(),
                intentions: IntentionStore::default(),
            }
        }

        fn view(&self, t: f64) -> WorldView<'_> {
            WorldView {
                t,
                order: &self.order,
                cores: &self.cores,
                routes: &self.routes,
                geoms: &self.geoms,
                preds: &self.preds,
                table: &self.table,
                passages: &self.passages,
                intentions: &self.intentions,
            }
        }
    }

    fn through(leg: Leg) -> Route {
        Route::new(leg, Movement::Through)
    }

    #[test]
    fn lone_cooperative_plan_matches_unconstrained() {
        let arena = Arena::new(&[(0.0, through(Leg::West), 8.3)]);
        let prm = EdParams::default();
        let mut st = EdState::new(12.5, 8.3);
        let out = ed_step(
            &arena.cores[0],
            &mut st,
            Cooperation::Cooperative,
            &arena.view(0.0),
            &prm,
        );
        assert!(out.use_plan && !out.queued && !out.fell_back);
        assert!(out.publish.is_some());
        let plan = st.plan.as_ref().unwrap();
        let bc = BoundaryConditions {
            v0: 8.3,
            vf: 8.3,
            x0: 0.0,
            xf: arena.geoms[0].total_len,
            t: 12.5,
        };
        let free = solve_unconstrained(&bc).unwrap();
        let want = free.accel(0.0);
        assert!(
            (out.accel - want).abs() < 1e-9,
            "accel {} vs unconstrained {want}",
            out.accel
        );
        assert!((plan.profile.end_pos() - bc.xf).abs() < 1e-9);
    }

    #[test]
    fn lone_noncooperative_plan_pins_visibility_speed() {
        let arena = Arena::new(&[(0.0, through(Leg::West), 8.3)]);
        let prm = EdParams::default();
        let mut st = EdState::new(14.0, 8.3);
        let out = ed_step(
            &arena.cores[0],
            &mut st,
            Cooperation::NonCooperative,
            &arena.view(0.0),
            &prm,
        );
        assert!(out.use_plan);
        assert!(out.publish.is_none());
        let plan = st.plan.as_ref().unwrap();
        let x_vis = arena.geoms[0].d_div - prm.d_vis_back;
        let k_vis = plan.profile.time_at_position(x_vis).unwrap();
        let v_at = plan.profile.speed(k_vis);
        assert!(
            (v_at - prm.v_vis).abs() < 1e-6,
            "speed at visibility point {v_at} want {}",
            prm.v_vis
        );
    }

    #[test]
    fn replan_is_consistent_with_first_plan() {
        // Re-solving mid-plan must reproduce the tail of the first
        // solution when nothing about the constraints changed.
        let arena = Arena::new(&[(0.0, through(Leg::West), 8.3)]);
        let prm = EdParams::default();
        let mut st = EdState::new(12.5, 8.3);
        let first = ed_step(
            &arena.cores[0],
            &mut st,
            Cooperation::Cooperative,
            &arena.view(0.0),
            &prm,
        );
        assert!(first.use_plan);
        let plan0 = st.plan.clone().unwrap();
        let mut arena2 = Arena::new(&[(0.0, through(Leg::West), 8.3)]);
        let k = 1.7;
        arena2.cores[0].x = plan0.profile.position(k);
        arena2.cores[0].v = plan0.profile.speed(k);
        arena2.cores[0].a = plan0.profile.accel(k);
        let out = ed_step(
            &arena2.cores[0],
            &mut st,
            Cooperation::Cooperative,
            &arena2.view(k),
            &prm,
        );
        assert!(out.use_plan);
        let plan1 = st.plan.as_ref().unwrap();
        for i in 0..=20 {
            let dk = (12.5 - k) * i as f64 / 20.0;
            let want = plan0.profile.position(k + dk) - plan0.profile.position(k);
            let got = plan1.profile.position(dk);
            assert!(
                (got - want).abs() < 1e-6,
                "tail position drifts at {dk}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn stopping_leader_turns_bound_into_queue() {
        // Leader braking to a stop 20 m ahead leaves less reachable road
        // than the trip needs, so the follower queues instead of planning.
        let mut arena = Arena::new(&[
            (0.0, through(Leg::West), 8.3),
            (1.0, through(Leg::West), 8.3),
        ]);
        arena.cores[0].x = 27.0;
        arena.cores[0].v = 4.0;
        arena.cores[0].a = -4.0;
        arena.cores[1].x = 5.0;
        arena.cores[1].v = 8.0;
        let prm = EdParams::default();
        let mut st = EdState::new(13.0, 8.3);
        let out = ed_step(
            &arena.cores[1],
            &mut st,
            Cooperation::NonCooperative,
            &arena.view(3.0),
            &prm,
        );
        assert!(out.queued, "expected queueing, got accel {}", out.accel);
        assert_eq!(st.queue_steps, 1);
        assert!(st.plan.is_none());
    }

    #[test]
    fn mild_leader_deceleration_keeps_planning() {
        // The same geometry with a leader that recovers: its stop is past
        // the preview window, so the bound is windowed and a plan exists.
        let mut arena = Arena::new(&[
            (0.0, through(Leg::West), 8.3),
            (1.0, through(Leg::West), 8.3),
        ]);
        arena.cores[0].x = 30.0;
        arena.cores[0].v = 8.0;
        arena.cores[0].a = -0.5;
        arena.cores[1].x = 5.0;
        arena.cores[1].v = 8.0;
        let prm = EdParams::default();
        let mut st = EdState::new(13.0, 8.3);
        let out = ed_step(
            &arena.cores[1],
            &mut st,
            Cooperation::NonCooperative,
            &arena.view(3.0),
            &prm,
        );
        assert!(out.use_plan, "expected a plan, queued={}", out.queued);
        assert!(!out.queued);
    }

    #[test]
    fn crossing_conflict_delays_passage() {
        // A published plan puts the conflicting vehicle at the shared
        // point late enough that the subject must wait out the clearance.
        let mut arena = Arena::new(&[
            (0.0, through(Leg::South), 8.3),
            (0.2, through(Leg::West), 8.3),
        ]);
        let prm = EdParams::default();
        let mut st0 = EdState::new(12.3, 8.3);
        let out0 = ed_step(
            &arena.cores[0],
            &mut st0,
            Cooperation::Cooperative,
            &arena.view(0.0),
            &prm,
        );
        arena.intentions.publish(out0.publish.clone().unwrap());
        let own_d = arena
            .table
            .get(arena.routes[1], arena.routes[0])
            .unwrap()
            .0;
        let other_d = arena
            .table
            .get(arena.routes[0], arena.routes[1])
            .unwrap()
            .0;
        let t_pred = arena.intentions.get(0).unwrap().arrival_at(other_d).unwrap();

        let mut st1 = EdState::new(12.3, 8.3);
        arena.cores[1].entry_time = 0.2;
        let out1 = ed_step(
            &arena.cores[1],
            &mut st1,
            Cooperation::Cooperative,
            &arena.view(0.2),
            &prm,
        );
        assert!(out1.use_plan);
        let plan = st1.plan.as_ref().unwrap();
        let arr = 0.2 + plan.profile.time_at_position(own_d).unwrap();
        assert!(
            arr >= t_pred + prm.lateral_dt - 1e-6,
            "arrival {arr} vs earliest {}",
            t_pred + prm.lateral_dt
        );
    }

    #[test]
    fn candidate_selection_prefers_cheaper_feasible_profile() {
        // With no conflicting vehicles the empty candidate must win and
        // equal the pinned-turn-only solution.
        let arena = Arena::new(&[(0.0, Route::new(Leg::West, Movement::Left), 6.0)]);
        let prm = EdParams::default();
        let mut st = EdState::new(16.0, 6.0);
        let out = ed_step(
            &arena.cores[0],
            &mut st,
            Cooperation::Cooperative,
            &arena.view(0.0),
            &prm,
        );
        assert!(out.use_plan);
        let plan = st.plan.as_ref().unwrap();
        let geom = &arena.geoms[0];
        let mid = 0.5 * geom.total_len;
        let k_mid = plan.profile.time_at_position(mid).unwrap();
        let want = turn_speed(geom.v_safe, geom.arc_len, prm.lim.a_max);
        assert!(
            (plan.profile.speed(k_mid) - want).abs() < 1e-6,
            "turn speed {} want {want}",
            plan.profile.speed(k_mid)
        );
    }

    #[test]
    fn reach_time_covers_all_branches() {
        assert_eq!(reach_time(5.0, 3.0, 0.0, 4.0), Some(0.0));
        let k = reach_time(0.0, 2.0, 0.0, 6.0).unwrap();
        assert!((k - 3.0).abs() < 1e-12);
        let k = reach_time(0.0, 0.0, 2.0, 4.0).unwrap();
        assert!((k - 2.0).abs() < 1e-12);
        assert_eq!(reach_time(0.0, 0.0, 0.0, 1.0), None);
        // Braking from 4 m/s at -2: travels 4 m then stops.
        assert_eq!(reach_time(0.0, 4.0, -2.0, 5.0), None);
        let k = reach_time(0.0, 4.0, -2.0, 3.0).unwrap();
        assert!((k - 1.0).abs() < 1e-12, "reached at {k}");
    }

    #[test]
    fn screen_bound_truncates_and_blocks() {
        match screen_bound(40.0, 4.0, -2.0, 5.0, 30.0) {
            Screen::Bound(b) => {
                assert!((b.valid_until - 2.0).abs() < 1e-12);
            }
            _ => panic!("expected a truncated bound"),
        }
        match screen_bound(20.0, 4.0, -2.0, 5.0, 30.0) {
            Screen::Blocked(c) => assert!((c - 24.0).abs() < 1e-12),
            _ => panic!("expected a blockage"),
        }
        match screen_bound(20.0, 4.0, 1.0, 5.0, 30.0) {
            Screen::Bound(b) => assert!((b.valid_until - 5.0).abs() < 1e-12),
            _ => panic!("expected a windowed bound"),
        }
    }
}
