//! Reactive car-following baseline.
//!
//! Vehicles follow the Intelligent Driver Model against the nearest
//! vehicle ahead on a shared lane segment. Crossing and merging conflicts
//! have no model term of their own: an unresolved conflict parks a
//! virtual standing leader at the central-zone boundary, and the vehicle
//! queues there until every conflicting predecessor has cleared its
//! shared point with enough margin. Turning vehicles additionally cap
//! their speed toward the lateral-grip limit of their arc.

use super::{turn_envelope, EdParams, VehicleCore, WorldView};
use crate::conflicts::conflict_sets_of;

/// Standard model constants. The acceleration bound doubles as the bound
/// used when predicting the earliest possible arrival at a conflict
/// point, so it must not exceed the vehicle limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdmParams {
    pub t_headway: f64,
    pub accel: f64,
    pub brake: f64,
    pub s0: f64,
    pub exponent: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        IdmParams { t_headway: 1.5, accel: 4.0, brake: 2.0, s0: 7.0, exponent: 4.0 }
    }
}

/// Margin below the lateral-grip limit targeted inside a turn arc, m/s.
const TURN_MARGIN: f64 = 0.15;
/// Extra wait beyond the required passage separation before a queued
/// vehicle is released, seconds.
const RELEASE_SLACK: f64 = 0.01;

/// Acceleration toward `v_desired` behind a leader `gap` meters ahead
/// closing at `dv` (positive when approaching). `gap` may be infinite on
/// a free road. The value is the raw model output; callers clamp it to
/// the vehicle's limits.
pub fn idm_accel(v: f64, gap: f64, dv: f64, v_desired: f64, p: &IdmParams) -> f64 {
    let free = (v / v_desired).powf(p.exponent);
    if !gap.is_finite() {
        return p.accel * (1.0 - free);
    }
    if gap <= 0.0 {
        return -p.accel * 10.0;
    }
    let s_star = p.s0 + v * p.t_headway + v * dv / (2.0 * (p.accel * p.brake).sqrt());
    let s_star = s_star.max(p.s0);
    p.accel * (1.0 - free - (s_star / gap) * (s_star / gap))
}

/// Earliest possible arrival delay at a point `dist` ahead when starting
/// from speed `v` and accelerating at no more than `a_max`. Zero when the
/// point is already behind.
pub fn earliest_arrival_delay(dist: f64, v: f64, a_max: f64) -> f64 {
    if dist <= 0.0 {
        return 0.0;
    }
    ((v * v + 2.0 * a_max * dist).sqrt() - v) / a_max
}

/// Gap from `me` to the nearest vehicle ahead on a shared lane segment,
/// measured along `me`'s path, with that vehicle's speed. Segments are
/// shared on the common entry lane, over the whole path for an identical
/// route, and on the common exit lane once the other vehicle has merged.
fn nearest_leader(me: &VehicleCore, world: &WorldView) -> Option<(f64, f64)> {
    let my_route = world.routes[me.id];
    let my_geom = &world.geoms[me.id];
    let mut best: Option<(f64, f64)> = None;
    let mut consider = |gap: f64, v: f64| {
        if gap > 0.0 && best.map_or(true, |(g, _)| gap < g) {
            best = Some((gap, v));
        }
    };
    for other in world.cores {
        if other.id == me.id || other.absent {
            continue;
        }
        let route = world.routes[other.id];
        let geom = &world.geoms[other.id];
        if route == my_route {
            consider(other.x - me.x, other.v);
        } else if route.entry_leg == my_route.entry_leg
            && me.x < my_geom.d_div
            && other.x <= geom.d_div
        {
            consider(other.x - me.x, other.v);
        } else if route.exit_leg == my_route.exit_leg && other.x >= geom.d_merge {
            consider((other.x - geom.d_merge) + my_geom.d_merge - me.x, other.v);
        }
    }
    best
}

/// True while some conflicting predecessor still blocks the subject's
/// entry into the central zone.
fn zone_blocked(me: &VehicleCore, world: &WorldView, zone: &EdParams) -> bool {
    let sets = conflict_sets_of(
        world.routes[me.id],
        &world.preds[me.id],
        world.routes,
        world.table,
    );
    for &(c, own_d, _) in &sets.cc {
        if me.x >= own_d {
            continue;
        }
        let released = match world.passages.crossing(c, me.id) {
            None => false,
            Some(tp) => {
                let delay = earliest_arrival_delay(own_d - me.x, me.v, zone.lim.a_max);
                world.t + delay >= tp + zone.lateral_dt + RELEASE_SLACK
            }
        };
        if !released {
            return true;
        }
    }
    let my_merge = world.geoms[me.id].d_merge;
    for &e in &sets.mc {
        if me.x >= my_merge {
            continue;
        }
        if world.passages.merge(e).is_none() {
            return true;
        }
    }
    false
}

/// One control decision for an IDM vehicle: the acceleration to hold for
/// the next step, clamped to the vehicle limits.
pub fn idm_intersection_step(
    me: &VehicleCore,
    v_desired: f64,
    world: &WorldView,
    p: &IdmParams,
    zone: &EdParams,
) -> f64 {
    let geom = &world.geoms[me.id];
    let (gap, v_lead) = nearest_leader(me, world).unwrap_or((f64::INFINITY, 0.0));
    let mut a = idm_accel(me.v, gap, me.v - v_lead, v_desired, p);

    if me.x < geom.d_div && zone_blocked(me, world, zone) {
        let wall_gap = geom.d_div + p.s0 - me.x;
        a = a.min(idm_accel(me.v, wall_gap, me.v, v_desired, p));
    }

    let target = turn_envelope(me.x, geom, p.brake, TURN_MARGIN);
    if target.is_finite() {
        a = a.min(p.accel * (1.0 - (me.v / target).powf(p.exponent)));
    }

    a.clamp(-zone.lim.a_max, zone.lim.a_max)
}
