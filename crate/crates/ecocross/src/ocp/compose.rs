//! Composition of optimal arcs through interior junctions.
//!
//! A junction pins some coordinates of the state at an interior point of
//! the trip (position, passage time, speed); the remaining coordinates are
//! decision variables. Between junctions the profile is an unconstrained
//! arc, or a bounded arc chain when a leader bound overlaps the segment.
//! Free junction coordinates are optimized by coordinate descent: speeds
//! have a closed-form update between plain arcs, everything else uses a
//! scan plus Brent refinement. Energy ranking between candidates does not
//! depend on the powertrain coefficients, because the coefficient-linear
//! parts of the energy are fixed by the shared boundary states.

use super::{BoundaryConditions, OcpError, FEAS_EPS};
use crate::energy::{segment_energy, PowertrainParams};
use crate::ocp::car_following::{bounded_pieces, LeaderPrediction};
use crate::ocp::numeric::scan_then_brent;
use crate::ocp::profile::SpeedProfile;
use crate::ocp::unconstrained::{interior_junction_speed, quad_coeffs, solve_unconstrained};
use crate::ocp::Limits;

/// Interior state pin. Coordinates left as `None` are optimized. At least
/// one of `dist` and `time` must be fixed so the junction has a place in
/// the segment ordering.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Junction {
    pub dist: Option<f64>,
    pub time: Option<f64>,
    pub speed: Option<f64>,
}

impl Junction {
    pub fn at_dist_and_time(dist: f64, time: f64) -> Self {
        Junction { dist: Some(dist), time: Some(time), speed: None }
    }

    pub fn at_dist_with_speed(dist: f64, speed: f64) -> Self {
        Junction { dist: Some(dist), time: None, speed: Some(speed) }
    }

    pub fn at_time(time: f64) -> Self {
        Junction { dist: None, time: Some(time), speed: None }
    }
}

/// Bound from a leader on the exit lane; applies only to segments at or
/// after `first_segment` (segments are indexed from 0, junction `j`
/// separates segments `j` and `j + 1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailBound {
    pub pred: LeaderPrediction,
    pub first_segment: usize,
}

/// Full composition problem in the local frame (position 0, time 0 at
/// the solve instant).
#[derive(Debug, Clone)]
pub struct ComposeProblem {
    pub v0: f64,
    pub vf: f64,
    pub dist: f64,
    pub horizon: f64,
    /// Interior pins ordered along the path.
    pub junctions: Vec<Junction>,
    /// Bound from the predecessor on the entry lane; applies to any
    /// segment starting inside its window.
    pub rear: Option<LeaderPrediction>,
    /// Bound from the predecessor on the exit lane.
    pub tail: Option<TailBound>,
    pub lim: Limits,
    pub pt: PowertrainParams,
}

impl ComposeProblem {
    pub fn new(v0: f64, vf: f64, dist: f64, horizon: f64) -> Self {
        ComposeProblem {
            v0,
            vf,
            dist,
            horizon,
            junctions: Vec::new(),
            rear: None,
            tail: None,
            lim: Limits::default(),
            pt: PowertrainParams::default(),
        }
    }
}

/// Identity of one free coordinate: which junction, which coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Dist(usize),
    Time(usize),
    Speed(usize),
}

/// Solver output: the assembled profile plus the resolved free coordinates
/// and a re-evaluation hook for derivative checks.
#[derive(Debug, Clone)]
pub struct Solved {
    pub profile: SpeedProfile,
    pub energy: f64,
    pub params: Vec<(ParamKind, f64)>,
    problem: ComposeProblem,
}

impl Solved {
    /// Total energy with the free coordinates replaced by `values`
    /// (same order as `params`); `None` when that assignment is
    /// infeasible. Used for finite-difference stationarity checks.
    pub fn energy_with(&self, values: &[f64]) -> Option<f64> {
        assert_eq!(values.len(), self.params.len());
        let kinds: Vec<ParamKind> = self.params.iter().map(|p| p.0).collect();
        let (xs, ts, vs) = resolve(&self.problem, &kinds, values);
        eval(&self.problem, &xs, &ts, &vs).map(|(_, e)| e)
    }
}

fn resolve(
    prob: &ComposeProblem,
    kinds: &[ParamKind],
    vals: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = prob.junctions.len();
    let mut xs = vec![0.0; n + 2];
    let mut ts = vec![0.0; n + 2];
    let mut vs = vec![0.0; n + 2];
    xs[n + 1] = prob.dist;
    ts[n + 1] = prob.horizon;
    vs[0] = prob.v0;
    vs[n + 1] = prob.vf;
    for (j, jc) in prob.junctions.iter().enumerate() {
        xs[j + 1] = jc.dist.unwrap_or(f64::NAN);
        ts[j + 1] = jc.time.unwrap_or(f64::NAN);
        vs[j + 1] = jc.speed.unwrap_or(f64::NAN);
    }
    for (k, kind) in kinds.iter().enumerate() {
        match *kind {
            ParamKind::Dist(j) => xs[j + 1] = vals[k],
            ParamKind::Time(j) => ts[j + 1] = vals[k],
            ParamKind::Speed(j) => vs[j + 1] = vals[k],
        }
    }
    (xs, ts, vs)
}

/// Bound applying to segment `i`, rebased to the segment's start state;
/// `None` when no bound overlaps. When both bounds overlap the tighter one
/// at the segment start wins; the post-solve audit still checks both in
/// full.
fn segment_pred(
    prob: &ComposeProblem,
    i: usize,
    ts: &[f64],
    xs: &[f64],
) -> Option<LeaderPrediction> {
    let mut chosen: Option<LeaderPrediction> = None;
    if let Some(r) = &prob.rear {
        if r.valid_until > ts[i] + 1e-12 {
            chosen = Some(r.rebased(ts[i], xs[i]));
        }
    }
    if let Some(tb) = &prob.tail {
        if i >= tb.first_segment && tb.pred.valid_until > ts[i] + 1e-12 {
            let reb = tb.pred.rebased(ts[i], xs[i]);
            chosen = Some(match chosen {
                Some(c) if c.x_p <= reb.x_p => c,
                _ => reb,
            });
        }
    }
    chosen
}

/// Evaluates the full composition for resolved junction coordinates.
/// Returns the piece list and total energy, `None` when any segment is
/// degenerate, bound-infeasible, or violates the actuation screens.
fn eval(
    prob: &ComposeProblem,
    xs: &[f64],
    ts: &[f64],
    vs: &[f64],
) -> Option<(Vec<(f64, f64, f64, f64)>, f64)> {
    let n = prob.junctions.len();
    let mut pieces: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(n + 1);
    let mut energy = 0.0;
    for i in 0..=n {
        let d = xs[i + 1] - xs[i];
        let dur = ts[i + 1] - ts[i];
        if !(d > 1e-9) || !(dur > 1e-9) {
            return None;
        }
        let seg_pieces = match segment_pred(prob, i, ts, xs) {
            Some(pred) => bounded_pieces(vs[i], vs[i + 1], d, dur, &pred, 0).ok()?,
            None => {
                let (b, c) = quad_coeffs(vs[i], vs[i + 1], d, dur);
                vec![(vs[i], b, c, dur)]
            }
        };
        for &(pv, pb, pc, pdur) in &seg_pieces {
            let vend = pv + pb * pdur + pc * pdur * pdur;
            let mut vmin = pv.min(vend);
            if pc.abs() > 0.0 {
                let kv = -pb / (2.0 * pc);
                if kv > 0.0 && kv < pdur {
                    vmin = vmin.min(pv + pb * kv + pc * kv * kv);
                }
            }
            if vmin < -FEAS_EPS {
                return None;
            }
            let a_ends = pb.abs().max((pb + 2.0 * pc * pdur).abs());
            if a_ends > prob.lim.a_max + FEAS_EPS {
                return None;
            }
            let pd = pv * pdur + 0.5 * pb * pdur * pdur + pc * pdur * pdur * pdur / 3.0;
            energy += segment_energy(pv, vend, pd, pdur, &prob.pt);
            pieces.push((pv, pb, pc, pdur));
        }
    }
    Some((pieces, energy))
}

/// Exact minimum of `bound - x` for a profile segment against a bound in
/// the global frame, restricted to the bound's window.
fn piece_min_gap(seg: &crate::ocp::profile::Segment, pred: &LeaderPrediction) -> f64 {
    if seg.t_start >= pred.valid_until - 1e-12 {
        return f64::INFINITY;
    }
    let upto = seg.duration.min(pred.valid_until - seg.t_start);
    let local = pred.rebased(seg.t_start, seg.c[0]);
    // Reuse the arc gap routine: piece speed polynomial coefficients.
    let v0 = seg.c[1];
    let b = 2.0 * seg.c[2];
    let cq = 3.0 * seg.c[3];
    let g3 = -cq / 3.0;
    let g2 = 0.5 * (local.a_p - b);
    let g1 = local.v_p - v0;
    let g0 = local.x_p;
    let g = |k: f64| ((g3 * k + g2) * k + g1) * k + g0;
    let mut m = g(0.0).min(g(upto));
    for k in crate::ocp::numeric::quadratic_roots(3.0 * g3, 2.0 * g2, g1).iter() {
        if k > 0.0 && k < upto {
            m = m.min(g(k));
        }
    }
    m
}

/// Audit of the assembled profile against both bounds over their full
/// windows, independent of which bound each segment was solved under.
fn post_check(prob: &ComposeProblem, profile: &SpeedProfile, ts: &[f64]) -> bool {
    let tol = -1e-6;
    for seg in &profile.segments {
        if let Some(r) = &prob.rear {
            if piece_min_gap(seg, r) < tol {
                return false;
            }
        }
        if let Some(tb) = &prob.tail {
            // The tail bound starts at the junction preceding its first
            // segment (trip start when first_segment is 0).
            let t_from = if tb.first_segment == 0 { 0.0 } else { ts[tb.first_segment] };
            if seg.t_start >= t_from - 1e-9 && piece_min_gap(seg, &tb.pred) < tol {
                return false;
            }
        }
    }
    true
}

const SWEEP_LIMIT: usize = 60;
const PARAM_TOL: f64 = 1e-10;
/// Minimum spacing kept between a free coordinate and its neighbors.
const BRACKET_MARGIN: f64 = 1e-4;

/// Solves the composition problem: optimizes all free junction
/// coordinates, assembles the profile, audits bounds and junction pins.
pub fn compose_multi(prob: &ComposeProblem) -> Result<Solved, OcpError> {
    if !(prob.horizon > 0.0) || !prob.horizon.is_finite() {
        return Err(OcpError::BadHorizon(prob.horizon));
    }
    if !(prob.dist > 0.0) {
        return Err(OcpError::BadDistance(prob.dist));
    }
    let mut kinds: Vec<ParamKind> = Vec::new();
    for (j, jc) in prob.junctions.iter().enumerate() {
        assert!(
            jc.dist.is_some() || jc.time.is_some(),
            "junction {j} needs a fixed distance or time"
        );
        if jc.dist.is_none() {
            kinds.push(ParamKind::Dist(j));
        }
        if jc.time.is_none() {
            kinds.push(ParamKind::Time(j));
        }
        if jc.speed.is_none() {
            kinds.push(ParamKind::Speed(j));
        }
    }
    let mut vals = init_params(prob, &kinds);
    let speed_hi = 25.0_f64
        .max(2.0 * prob.v0.max(prob.vf))
        .max(3.0 * prob.dist / prob.horizon);

    if !kinds.is_empty() {
        for _sweep in 0..SWEEP_LIMIT {
            let mut delta: f64 = 0.0;
            for k in 0..kinds.len() {
                let old = vals[k];
                let new = improve_param(prob, &kinds, &vals, k, speed_hi);
                vals[k] = new;
                delta = delta.max((new - old).abs());
            }
            if delta < PARAM_TOL {
                break;
            }
        }
    }

    let (xs, ts, vs) = resolve(prob, &kinds, &vals);
    let (pieces, energy) = eval(prob, &xs, &ts, &vs).ok_or(OcpError::Infeasible)?;
    let profile = SpeedProfile::from_pieces(&pieces);
    if !post_check(prob, &profile, &ts) {
        return Err(OcpError::Infeasible);
    }
    let params = kinds.iter().copied().zip(vals).map(|(k, v)| (k, v)).collect();
    Ok(Solved { profile, energy, params, problem: prob.clone() })
}

/// Starting values for the free coordinates: free distances from time
/// fractions, free times from distance fractions, free speeds from a
/// linear ramp, everything clamped so the initial ordering is strict.
fn init_params(prob: &ComposeProblem, kinds: &[ParamKind]) -> Vec<f64> {
    let n = prob.junctions.len();
    let mut xs: Vec<f64> = vec![f64::NAN; n + 2];
    let mut ts: Vec<f64> = vec![f64::NAN; n + 2];
    xs[0] = 0.0;
    ts[0] = 0.0;
    xs[n + 1] = prob.dist;
    ts[n + 1] = prob.horizon;
    for (j, jc) in prob.junctions.iter().enumerate() {
        if let Some(d) = jc.dist {
            xs[j + 1] = d;
        }
        if let Some(t) = jc.time {
            ts[j + 1] = t;
        }
    }
    // Free distances from time fraction of the total trip.
    for j in 0..n {
        if xs[j + 1].is_nan() {
            let frac = if ts[j + 1].is_nan() { (j as f64 + 1.0) / (n as f64 + 1.0) } else { ts[j + 1] / prob.horizon };
            xs[j + 1] = (frac * prob.dist).clamp(0.01 * prob.dist, 0.99 * prob.dist);
        }
    }
    for j in 0..n {
        if xs[j + 1] <= xs[j] {
            xs[j + 1] = xs[j] + 0.01 * prob.dist;
        }
    }
    // Free times from distance fraction.
    for j in 0..n {
        if ts[j + 1].is_nan() {
            ts[j + 1] = (xs[j + 1] / prob.dist * prob.horizon)
                .clamp(0.01 * prob.horizon, 0.99 * prob.horizon);
        }
    }
    for j in 0..n {
        if ts[j + 1] <= ts[j] {
            ts[j + 1] = ts[j] + 0.01 * prob.horizon;
        }
    }
    let mut vals = Vec::with_capacity(kinds.len());
    for kind in kinds {
        match *kind {
            ParamKind::Dist(j) => vals.push(xs[j + 1]),
            ParamKind::Time(j) => vals.push(ts[j + 1]),
            ParamKind::Speed(j) => {
                let frac = xs[j + 1] / prob.dist;
                vals.push((prob.v0 + (prob.vf - prob.v0) * frac).max(0.0));
            }
        }
    }
    vals
}

/// One coordinate-descent update of parameter `k`; returns the improved
/// value (or the old one when nothing feasible beats it).
fn improve_param(
    prob: &ComposeProblem,
    kinds: &[ParamKind],
    vals: &[f64],
    k: usize,
    speed_hi: f64,
) -> f64 {
    let old = vals[k];
    let mut cand = vals.to_vec();
    let energy_at = |x: f64, cand: &mut Vec<f64>| -> f64 {
        cand[k] = x;
        let (xs, ts, vs) = resolve(prob, kinds, cand);
        eval(prob, &xs, &ts, &vs).map_or(f64::INFINITY, |(_, e)| e)
    };
    let cur = energy_at(old, &mut cand);

    let (xs, ts, vs) = resolve(prob, kinds, vals);
    match kinds[k] {
        ParamKind::Time(j) => {
            let lo = ts[j] + BRACKET_MARGIN;
            let hi = ts[j + 2] - BRACKET_MARGIN;
            if lo >= hi {
                return old;
            }
            let f = |x: f64| energy_at(x, &mut cand.clone());
            match scan_then_brent(f, lo, hi, 40, 1e-11) {
                Some((x, e)) if e < cur => x,
                _ => old,
            }
        }
        ParamKind::Dist(j) => {
            let lo = xs[j] + BRACKET_MARGIN;
            let hi = xs[j + 2] - BRACKET_MARGIN;
            if lo >= hi {
                return old;
            }
            let f = |x: f64| energy_at(x, &mut cand.clone());
            match scan_then_brent(f, lo, hi, 40, 1e-11) {
                Some((x, e)) if e < cur => x,
                _ => old,
            }
        }
        ParamKind::Speed(j) => {
            // Closed form when neither adjacent segment carries a bound.
            let plain = segment_pred(prob, j, &ts, &xs).is_none()
                && segment_pred(prob, j + 1, &ts, &xs).is_none();
            if plain {
                let vj = interior_junction_speed(
                    vs[j],
                    xs[j + 1] - xs[j],
                    ts[j + 1] - ts[j],
                    xs[j + 2] - xs[j + 1],
                    ts[j + 2] - ts[j + 1],
                    vs[j + 2],
                )
                .max(0.0);
                let e = energy_at(vj, &mut cand);
                if e.is_finite() && e <= cur + 1e-15 {
                    return vj;
                }
            }
            let f = |x: f64| energy_at(x, &mut cand.clone());
            match scan_then_brent(f, 0.0, speed_hi, 32, 1e-11) {
                Some((x, e)) if e < cur => x,
                _ => old,
            }
        }
    }
}

/// Single interior pin; thin wrapper over [`compose_multi`].
pub fn solve_interior_point(
    bc: &BoundaryConditions,
    junction: Junction,
) -> Result<Solved, OcpError> {
    bc.check()?;
    let mut prob = ComposeProblem::new(bc.v0, bc.vf, bc.dist(), bc.t);
    prob.junctions.push(junction);
    compose_multi(&prob)
}

/// Earliest-passage constraints at fixed conflict distances: each entry is
/// `(distance, earliest passage time)`. Constraints the free profile
/// already satisfies stay inactive; the rest pin the passage time exactly.
/// Activation is iterative because pinning one passage can push another
/// below its own earliest time.
pub fn solve_crossing(
    bc: &BoundaryConditions,
    crossings: &[(f64, f64)],
    lim: &Limits,
) -> Result<Solved, OcpError> {
    bc.check()?;
    for &(d, k) in crossings {
        if !(d > 0.0 && d < bc.dist()) {
            return Err(OcpError::BadDistance(d));
        }
        if k >= bc.t {
            return Err(OcpError::Infeasible);
        }
    }
    let mut active: Vec<usize> = Vec::new();
    loop {
        let mut prob = ComposeProblem::new(bc.v0, bc.vf, bc.dist(), bc.t);
        prob.lim = *lim;
        let mut order: Vec<usize> = active.clone();
        order.sort_by(|&a, &b| crossings[a].0.total_cmp(&crossings[b].0));
        for &i in &order {
            prob.junctions.push(Junction::at_dist_and_time(crossings[i].0, crossings[i].1));
        }
        let sol = compose_multi(&prob)?;
        let mut worst: Option<(usize, f64)> = None;
        for (i, &(d, kmin)) in crossings.iter().enumerate() {
            if active.contains(&i) {
                continue;
            }
            let arr = sol.profile.time_at_position(d).unwrap_or(f64::INFINITY);
            let early = kmin - arr;
            if early > 1e-9 && worst.map_or(true, |(_, w)| early > w) {
                worst = Some((i, early));
            }
        }
        match worst {
            None => return Ok(sol),
            Some((i, _)) => active.push(i),
        }
    }
}

/// Merge behind a leader on the exit lane: the merge point must be passed
/// no earlier than `k_e`, and after it the leader bound applies. The
/// passage is pinned at `k_e` or at the free profile's own arrival there,
/// whichever is later, which keeps the post-merge bound anchored.
pub fn solve_merging(
    bc: &BoundaryConditions,
    merge_dist: f64,
    k_e: f64,
    tail: &LeaderPrediction,
    lim: &Limits,
) -> Result<Solved, OcpError> {
    bc.check()?;
    if !(merge_dist > 0.0 && merge_dist < bc.dist()) {
        return Err(OcpError::BadDistance(merge_dist));
    }
    let free = solve_unconstrained(bc)?;
    let t_free = free.time_at_position(merge_dist).unwrap_or(f64::INFINITY);
    let t_pin = k_e.max(t_free);
    if t_pin >= bc.t {
        return Err(OcpError::Infeasible);
    }
    let mut prob = ComposeProblem::new(bc.v0, bc.vf, bc.dist(), bc.t);
    prob.lim = *lim;
    prob.junctions.push(Junction::at_dist_and_time(merge_dist, t_pin));
    prob.tail = Some(TailBound { pred: *tail, first_segment: 1 });
    compose_multi(&prob)
}

/// Keep-behind constraint while approaching a diverge point: the bound
/// applies until its own window ends. The bounded arc solver already
/// covers the tangent-contact and window-end-corner structures.
pub fn solve_diverging(
    bc: &BoundaryConditions,
    rear: &LeaderPrediction,
) -> Result<SpeedProfile, OcpError> {
    crate::ocp::car_following::solve_car_following(bc, rear)
}

/// Fixed-speed pin at the midpoint of a turn: distance and speed pinned,
/// passage time free.
pub fn solve_turning(
    bc: &BoundaryConditions,
    mid_dist: f64,
    v_turn: f64,
    lim: &Limits,
) -> Result<Solved, OcpError> {
    bc.check()?;
    if !(mid_dist > 0.0 && mid_dist < bc.dist()) {
        return Err(OcpError::BadDistance(mid_dist));
    }
    let mut prob = ComposeProblem::new(bc.v0, bc.vf, bc.dist(), bc.t);
    prob.lim = *lim;
    prob.junctions.push(Junction::at_dist_with_speed(mid_dist, v_turn));
    compose_multi(&prob)
}

/// Largest midpoint speed that keeps the whole turn arc under the lateral
/// limit when the vehicle accelerates away from the midpoint at no more
/// than `a_max`: the speed can grow by at most `a_max * arc_len / 2`
/// (squared) toward either arc end.
pub fn turn_speed(v_safe: f64, arc_len: f64, a_max: f64) -> f64 {
    (v_safe * v_safe - a_max * arc_len).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    const PT: PowertrainParams = PowertrainParams { p0: 1.0, p1: 0.1, h: 0.05 };

    fn fd_gradient(sol: &Solved, idx: usize, h: f64) -> Option<f64> {
        let base: Vec<f64> = sol.params.iter().map(|p| p.1).collect();
        let mut up = base.clone();
        up[idx] += h;
        let mut dn = base;
        dn[idx] -= h;
        Some((sol.energy_with(&up)? - sol.energy_with(&dn)?) / (2.0 * h))
    }

    #[test]
    fn crossing_pins_passage_time() {
        let bc = BoundaryConditions::local(8.0, 8.0, 100.0, 12.0).unwrap();
        let sol = solve_crossing(&bc, &[(50.0, 7.0)], &Limits::default()).unwrap();
        let t50 = sol.profile.time_at_position(50.0).unwrap();
        assert!((t50 - 7.0).abs() < 1e-9, "passage at {t50}");
        assert!((sol.profile.end_pos() - 100.0).abs() < 1e-9);
        assert!((sol.profile.end_speed() - 8.0).abs() < 1e-9);
        assert_eq!(sol.params.len(), 1);
        // Free junction speed is stationary.
        let g = fd_gradient(&sol, 0, 1e-5).unwrap();
        assert!(g.abs() < 1e-6, "junction speed gradient {g}");
        // Costlier than the free profile.
        let free = solve_unconstrained(&bc).unwrap().energy(&PT);
        assert!(sol.energy > free);
    }

    #[test]
    fn crossing_inactive_when_already_late() {
        let bc = BoundaryConditions::local(8.0, 8.0, 100.0, 12.0).unwrap();
        // Free profile passes 50 m at t = 6; an earliest time of 5 binds
        // nothing.
        let sol = solve_crossing(&bc, &[(50.0, 5.0)], &Limits::default()).unwrap();
        assert!(sol.params.is_empty());
        assert_eq!(sol.profile.segments.len(), 1);
    }

    #[test]
    fn crossing_activation_cascades() {
        let bc = BoundaryConditions::local(8.0, 8.0, 100.0, 14.0).unwrap();
        // Pinning the first passage pushes the second one early enough to
        // need its own pin.
        let sol = solve_crossing(&bc, &[(40.0, 7.0), (60.0, 9.3)], &Limits::default()).unwrap();
        let t40 = sol.profile.time_at_position(40.0).unwrap();
        let t60 = sol.profile.time_at_position(60.0).unwrap();
        assert!(t40 >= 7.0 - 1e-9);
        assert!(t60 >= 9.3 - 1e-9);
        assert!((sol.profile.end_pos() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn turning_pins_speed_with_free_time() {
        let bc = BoundaryConditions::local(8.0, 8.0, 100.0, 16.0).unwrap();
        let sol = solve_turning(&bc, 50.0, 6.0, &Limits::default()).unwrap();
        let t_mid = sol.profile.time_at_position(50.0).unwrap();
        assert!((sol.profile.speed(t_mid) - 6.0).abs() < 1e-8, "mid speed");
        assert!((sol.profile.end_pos() - 100.0).abs() < 1e-9);
        // One free time parameter, stationary at the optimum.
        let idx = sol.params.iter().position(|p| matches!(p.0, ParamKind::Time(_))).unwrap();
        let g = fd_gradient(&sol, idx, 1e-5).unwrap();
        let scale = sol.energy.abs().max(1.0);
        assert!(g.abs() / scale < 1e-5, "time gradient {g}");
    }

    #[test]
    fn merging_respects_exit_leader() {
        let bc = BoundaryConditions::local(8.0, 8.0, 100.0, 13.0).unwrap();
        // Leader clears the merge point early but stays slow; its bound
        // window ends at 10 s.
        let tail = LeaderPrediction { x_p: 10.6, v_p: 6.0, a_p: 0.0, valid_until: 10.0 };
        let sol = solve_merging(&bc, 54.0, 7.4, &tail, &Limits::default()).unwrap();
        let t_m = sol.profile.time_at_position(54.0).unwrap();
        assert!((t_m - 7.4).abs() < 1e-9, "merge passage {t_m}");
        // Post-merge positions stay behind the bound inside its window.
        let mut k = t_m;
        while k <= 10.0 {
            let gap = tail.bound(k) - sol.profile.position(k);
            assert!(gap > -1e-6, "tail gap {gap} at {k}");
            k += 0.001;
        }
        assert!((sol.profile.end_pos() - 100.0).abs() < 1e-9);
        assert!((sol.profile.end_speed() - 8.0).abs() < 1e-9);
    }

    #[test]
    fn rear_bound_inside_composition() {
        // Fully pinned junction behind a close, slower leader whose bound
        // window ends before the junction: the first segment needs the
        // bounded construction, the rest is plain.
        let bc = BoundaryConditions::local(8.0, 8.0, 100.0, 12.0).unwrap();
        let rear = LeaderPrediction { x_p: 2.0, v_p: 6.8, a_p: 0.0, valid_until: 5.0 };
        let mut prob = ComposeProblem::new(bc.v0, bc.vf, bc.dist(), bc.t);
        prob.junctions.push(Junction {
            dist: Some(50.0),
            time: Some(6.6),
            speed: Some(7.5),
        });
        prob.rear = Some(rear);
        let sol = compose_multi(&prob).unwrap();
        assert!(sol.params.is_empty());
        let mut k = 0.0;
        while k <= 5.0 {
            let gap = rear.bound(k) - sol.profile.position(k);
            assert!(gap > -1e-6, "rear gap {gap} at {k}");
            k += 0.001;
        }
        let t50 = sol.profile.time_at_position(50.0).unwrap();
        assert!((t50 - 6.6).abs() < 1e-9);
        assert!((sol.profile.speed(t50) - 7.5).abs() < 1e-8);
        assert!((sol.profile.end_pos() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn energy_with_matches_solution() {
        let bc = BoundaryConditions::local(8.0, 9.0, 110.0, 13.0).unwrap();
        let sol = solve_crossing(&bc, &[(45.0, 6.8)], &Limits::default()).unwrap();
        let vals: Vec<f64> = sol.params.iter().map(|p| p.1).collect();
        let e = sol.energy_with(&vals).unwrap();
        assert!((e - sol.energy).abs() < 1e-9);
    }

    #[test]
    fn turn_speed_limits() {
        // As the acceleration budget vanishes the pin approaches the
        // lateral limit itself.
        assert!((turn_speed(5.0, 3.0, 0.0) - 5.0).abs() < 1e-12);
        assert!(turn_speed(5.0, 3.0, 4.0) < 5.0);
        // Never NaN, even when the budget exceeds the limit.
        assert_eq!(turn_speed(1.0, 10.0, 4.0), 0.0);
    }
}
