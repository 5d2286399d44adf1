//! Who crosses first and who constrains whom.
//!
//! The coordinator assigns a priority permutation to the vehicles inside
//! the control zone. Against that order, each vehicle classifies every
//! higher-priority vehicle into the four conflict kinds, reduces the sets
//! to the members that can actually bind, and enumerates the constraint
//! subsets worth solving.

use crate::geometry::{classify_pair, CrossingTable, PairClass, Route};
use crate::ocp::profile::SpeedProfile;

pub type VehicleId = usize;

/// What the coordinator knows about a vehicle when ordering it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntryRecord {
    pub id: VehicleId,
    pub entry_time: f64,
    pub route: Route,
}

/// Priority permutation of the vehicles inside the control zone; earlier
/// position means earlier crossing right.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CrossingOrder {
    ids: Vec<VehicleId>,
}

impl CrossingOrder {
    pub fn ids(&self) -> &[VehicleId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Position of `id` in the order; 0 is the highest priority.
    pub fn rank(&self, id: VehicleId) -> Option<usize> {
        self.ids.iter().position(|&x| x == id)
    }

    /// Ids that precede `id`, highest priority first. Empty when `id` is
    /// first or absent.
    pub fn predecessors(&self, id: VehicleId) -> &[VehicleId] {
        match self.rank(id) {
            Some(r) => &self.ids[..r],
            None => &[],
        }
    }

    /// Appends a newly admitted vehicle at the lowest priority.
    pub fn push(&mut self, id: VehicleId) {
        debug_assert!(self.rank(id).is_none());
        self.ids.push(id);
    }

    /// Removes an exited vehicle; the relative order of the rest is kept.
    pub fn remove(&mut self, id: VehicleId) {
        self.ids.retain(|&x| x != id);
    }
}

/// Builds the order for a set of entry records: first-come-first-served,
/// except that entries closer together than `tie_window` whose paths
/// conflict yield to the vehicle coming from the right. The swap pass
/// repeats until stable so chains of ties settle deterministically.
pub fn crossing_order(entries: &[EntryRecord], tie_window: f64) -> CrossingOrder {
    let mut sorted: Vec<EntryRecord> = entries.to_vec();
    sorted.sort_by(|a, b| a.entry_time.total_cmp(&b.entry_time).then(a.id.cmp(&b.id)));
    for _ in 0..sorted.len() {
        let mut swapped = false;
        for k in 1..sorted.len() {
            let (a, b) = (sorted[k - 1], sorted[k]);
            let tied = (b.entry_time - a.entry_time).abs() <= tie_window + 1e-12;
            let conflicting = classify_pair(a.route, b.route) != PairClass::Independent;
            let b_on_a_right = a.route.entry_leg.right_neighbor() == b.route.entry_leg;
            if tied && conflicting && b_on_a_right {
                sorted.swap(k - 1, k);
                swapped = true;
            }
        }
        if !swapped {
            break;
        }
    }
    CrossingOrder { ids: sorted.iter().map(|e| e.id).collect() }
}

/// The higher-priority vehicles that conflict with a subject, grouped by
/// conflict kind. Lists keep crossing-order position (highest priority
/// first), so the last element is the nearest predecessor of its kind.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConflictSets {
    /// Same entry lane, different movement; binds until the diverge point.
    pub dc: Vec<VehicleId>,
    /// Different entry lane, same exit lane; binds from the merge point.
    pub mc: Vec<VehicleId>,
    /// Transversal path intersections: id, own distance to the shared
    /// point, the other vehicle's distance to it.
    pub cc: Vec<(VehicleId, f64, f64)>,
    /// Identical route; binds over the whole path.
    pub cf: Vec<VehicleId>,
}

/// Classifies every predecessor of `id` in the order. `routes` is indexed
/// by vehicle id.
pub fn conflict_sets(
    id: VehicleId,
    order: &CrossingOrder,
    routes: &[Route],
    table: &CrossingTable,
) -> ConflictSets {
    conflict_sets_of(routes[id], order.predecessors(id), routes, table)
}

/// Classifies an explicit predecessor list (highest priority first)
/// against the subject's route. Controllers pass the list frozen at the
/// subject's admission so constraints survive a predecessor's exit.
pub fn conflict_sets_of(
    own: Route,
    preds: &[VehicleId],
    routes: &[Route],
    table: &CrossingTable,
) -> ConflictSets {
    let mut sets = ConflictSets::default();
    for &j in preds {
        match classify_pair(own, routes[j]) {
            PairClass::CarFollowing => sets.cf.push(j),
            PairClass::Diverging => sets.dc.push(j),
            PairClass::Merging => sets.mc.push(j),
            PairClass::Crossing => {
                let (own_d, other_d) = table
                    .get(own, routes[j])
                    .expect("crossing pair must be in the table");
                sets.cc.push((j, own_d, other_d));
            }
            PairClass::Independent => {}
        }
    }
    sets
}

/// Rear-end conflict kind: whether the vehicle ahead shares the whole path
/// or leaves it at the diverge point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RearKind {
    CarFollowing,
    Diverging,
}

/// Turn requirement of the subject's own route.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurnSpec {
    /// Distance to the arc midpoint, meters.
    pub mid_dist: f64,
    /// Required passage speed there, m/s.
    pub v_turn: f64,
}

/// The conflicts that can actually bind: at most one rear-end, one merge,
/// one crossing, plus the subject's own turn requirement.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConflictAssignment {
    pub rear: Option<(VehicleId, RearKind)>,
    pub merge: Option<VehicleId>,
    /// Selected crossing: id, own distance, other's distance.
    pub cross: Option<(VehicleId, f64, f64)>,
    pub turn: Option<TurnSpec>,
}

/// Reduces full conflict sets to the members that can bind. The rear-end
/// pick is the nearest same-lane predecessor (car-following and diverging
/// are mutually exclusive for it); the merge pick is the last vehicle to
/// merge ahead; the crossing pick is the one whose earliest-passage
/// requirement the free profile misses by the largest time margin.
/// `earliest(id, own_d, other_d)` returns the earliest time the subject
/// may pass its shared point with that vehicle, or `None` when the
/// conflict cannot bind. `preds` is the priority list the sets were built
/// from; it breaks the tie between the last same-lane predecessors.
pub fn effective_conflicts(
    preds: &[VehicleId],
    sets: &ConflictSets,
    free: &SpeedProfile,
    mut earliest: impl FnMut(VehicleId, f64, f64) -> Option<f64>,
    turn: Option<TurnSpec>,
) -> ConflictAssignment {
    let rear = {
        let cf = sets.cf.last().map(|&j| (j, RearKind::CarFollowing));
        let dc = sets.dc.last().map(|&j| (j, RearKind::Diverging));
        match (cf, dc) {
            (Some(a), Some(b)) => {
                let pos = |id| preds.iter().position(|&x| x == id);
                let ra = pos(a.0).expect("cf member is a predecessor");
                let rb = pos(b.0).expect("dc member is a predecessor");
                Some(if ra > rb { a } else { b })
            }
            (a, b) => a.or(b),
        }
    };
    let merge = sets.mc.last().copied();
    let mut cross: Option<(VehicleId, f64, f64)> = None;
    let mut worst = 1e-9;
    for &(j, own_d, other_d) in &sets.cc {
        let Some(k_min) = earliest(j, own_d, other_d) else { continue };
        let arrival = free.time_at_position(own_d).unwrap_or(f64::INFINITY);
        let margin = k_min - arrival;
        if margin > worst {
            worst = margin;
            cross = Some((j, own_d, other_d));
        }
    }
    ConflictAssignment { rear, merge, cross, turn }
}

/// One subset of the optional conflicts to impose in a candidate solve.
/// The turn requirement is intrinsic to the route and is always imposed,
/// so it carries no flag.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CandidateSet {
    pub rear: bool,
    pub merge: bool,
    pub cross: bool,
}

/// All constraint subsets worth evaluating: the power set of the present
/// optional conflicts, from the empty set to the full one. Absent
/// conflicts never get a flag, so the list has 2^k entries for k present.
pub fn enumerate_candidates(assignment: &ConflictAssignment) -> Vec<CandidateSet> {
    let mut out = vec![CandidateSet::default()];
    if assignment.rear.is_some() {
        let more: Vec<CandidateSet> =
            out.iter().map(|c| CandidateSet { rear: true, ..*c }).collect();
        out.extend(more);
    }
    if assignment.merge.is_some() {
        let more: Vec<CandidateSet> =
            out.iter().map(|c| CandidateSet { merge: true, ..*c }).collect();
        out.extend(more);
    }
    if assignment.cross.is_some() {
        let more: Vec<CandidateSet> =
            out.iter().map(|c| CandidateSet { cross: true, ..*c }).collect();
        out.extend(more);
    }
    out
}
