//! Intersection layout: four perpendicular legs, twelve fixed routes, exact
//! conflict points between route centerlines, and turning speed limits.
//!
//! Coordinates put the intersection center at the origin. The central zone
//! is the square `[-w, w]²` for lane width `w`; each leg carries one entry
//! lane and one exit lane whose centerlines sit `w/2` to the right of the
//! road axis in the direction of travel. Distances along a route are
//! measured from the control-zone entry, so the central zone starts at
//! `d_div = lane_length` on every route.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use crate::ocp::numeric::quadratic_roots;

/// Compass leg of the intersection, named by the side a vehicle comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Leg {
    North,
    East,
    South,
    West,
}

impl Leg {
    pub const ALL: [Leg; 4] = [Leg::North, Leg::East, Leg::South, Leg::West];

    pub fn opposite(self) -> Leg {
        match self {
            Leg::North => Leg::South,
            Leg::South => Leg::North,
            Leg::East => Leg::West,
            Leg::West => Leg::East,
        }
    }

    /// Leg on the right-hand side of a driver approaching on `self`.
    pub fn right_neighbor(self) -> Leg {
        match self {
            Leg::North => Leg::West,
            Leg::West => Leg::South,
            Leg::South => Leg::East,
            Leg::East => Leg::North,
        }
    }

    pub fn left_neighbor(self) -> Leg {
        self.right_neighbor().opposite()
    }

    fn letter(self) -> char {
        match self {
            Leg::North => 'N',
            Leg::East => 'E',
            Leg::South => 'S',
            Leg::West => 'W',
        }
    }

    fn index(self) -> usize {
        match self {
            Leg::North => 0,
            Leg::East => 1,
            Leg::South => 2,
            Leg::West => 3,
        }
    }

    /// Unit heading of traffic entering the central zone from this leg.
    fn in_heading(self) -> [f64; 2] {
        match self {
            Leg::North => [0.0, -1.0],
            Leg::East => [-1.0, 0.0],
            Leg::South => [0.0, 1.0],
            Leg::West => [1.0, 0.0],
        }
    }
}

impl fmt::Display for Leg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Movement {
    Through,
    Left,
    Right,
}

impl Movement {
    pub const ALL: [Movement; 3] = [Movement::Through, Movement::Left, Movement::Right];

    fn index(self) -> usize {
        match self {
            Movement::Through => 0,
            Movement::Left => 1,
            Movement::Right => 2,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Movement::Through => "through",
            Movement::Left => "left",
            Movement::Right => "right",
        }
    }
}

impl fmt::Display for Movement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One of the twelve fixed routes. The exit leg is determined by the entry
/// leg and movement; U-turns do not exist.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Route {
    pub entry_leg: Leg,
    pub movement: Movement,
    pub exit_leg: Leg,
}

impl Route {
    pub fn new(entry_leg: Leg, movement: Movement) -> Route {
        let exit_leg = match movement {
            Movement::Through => entry_leg.opposite(),
            Movement::Left => entry_leg.left_neighbor(),
            Movement::Right => entry_leg.right_neighbor(),
        };
        Route { entry_leg, movement, exit_leg }
    }

    /// All twelve routes in a fixed order: legs N, E, S, W, movements
    /// through, left, right within each leg.
    pub fn all() -> Vec<Route> {
        let mut v = Vec::with_capacity(12);
        for leg in Leg::ALL {
            for m in Movement::ALL {
                v.push(Route::new(leg, m));
            }
        }
        v
    }

    /// Stable index into the `Route::all()` ordering.
    pub fn index(&self) -> usize {
        self.entry_leg.index() * 3 + self.movement.index()
    }
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.entry_leg.letter(), self.movement.name())
    }
}

impl FromStr for Route {
    type Err = String;

    fn from_str(s: &str) -> Result<Route, String> {
        let (leg_s, mov_s) = s
            .split_once('_')
            .ok_or_else(|| format!("route '{s}' is not of the form LEG_movement"))?;
        let leg = match leg_s {
            "N" => Leg::North,
            "E" => Leg::East,
            "S" => Leg::South,
            "W" => Leg::West,
            _ => return Err(format!("unknown leg '{leg_s}' in route '{s}'")),
        };
        let movement = match mov_s {
            "through" => Movement::Through,
            "left" => Movement::Left,
            "right" => Movement::Right,
            _ => return Err(format!("unknown movement '{mov_s}' in route '{s}'")),
        };
        Ok(Route::new(leg, movement))
    }
}

/// Physical layout parameters. Defaults give 47 m legs, 4 m lanes, and
/// turning arcs tangent to the lane centerlines.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntersectionSpec {
    /// Length of each entry and exit lane, meters.
    pub lane_length: f64,
    /// Lane width, meters. The central zone is `2w` across.
    pub lane_width: f64,
    /// Tire friction coefficient used for safe turning speeds.
    pub friction: f64,
    /// Gravitational acceleration, m/s².
    pub gravity: f64,
    /// Right-turn arc radius, meters.
    pub right_turn_radius: f64,
    /// Left-turn arc radius, meters.
    pub left_turn_radius: f64,
}

impl Default for IntersectionSpec {
    fn default() -> IntersectionSpec {
        IntersectionSpec {
            lane_length: 47.0,
            lane_width: 4.0,
            friction: 0.7,
            gravity: 9.81,
            right_turn_radius: 2.0,
            left_turn_radius: 6.0,
        }
    }
}

impl IntersectionSpec {
    /// Largest radius whose quarter arc stays tangent to both lane
    /// centerlines of the given movement.
    pub fn natural_radius(&self, movement: Movement) -> f64 {
        match movement {
            Movement::Through => f64::INFINITY,
            Movement::Right => 0.5 * self.lane_width,
            Movement::Left => 1.5 * self.lane_width,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.lane_length > 0.0) {
            return Err(format!("lane_length must be positive, got {}", self.lane_length));
        }
        if !(self.lane_width > 0.0) {
            return Err(format!("lane_width must be positive, got {}", self.lane_width));
        }
        if !(self.friction > 0.0 && self.friction <= 1.0) {
            return Err(format!("friction must lie in (0, 1], got {}", self.friction));
        }
        if !(self.gravity > 0.0) {
            return Err(format!("gravity must be positive, got {}", self.gravity));
        }
        if !(self.right_turn_radius > 0.0) {
            return Err(format!(
                "right_turn_radius must be positive, got {}",
                self.right_turn_radius
            ));
        }
        if self.right_turn_radius > self.natural_radius(Movement::Right) + 1e-9 {
            return Err(format!(
                "right_turn_radius {} exceeds the lane-tangent maximum {}",
                self.right_turn_radius,
                self.natural_radius(Movement::Right)
            ));
        }
        if !(self.left_turn_radius > self.right_turn_radius) {
            return Err(format!(
                "left_turn_radius {} must exceed right_turn_radius {}",
                self.left_turn_radius, self.right_turn_radius
            ));
        }
        if self.left_turn_radius > self.natural_radius(Movement::Left) + 1e-9 {
            return Err(format!(
                "left_turn_radius {} exceeds the lane-tangent maximum {}",
                self.left_turn_radius,
                self.natural_radius(Movement::Left)
            ));
        }
        Ok(())
    }

    /// Distance from the control-zone entry to the central zone, equal on
    /// every route.
    pub fn divert_dist(&self) -> f64 {
        self.lane_length
    }

    pub fn turn_radius(&self, movement: Movement) -> f64 {
        match movement {
            Movement::Through => f64::INFINITY,
            Movement::Left => self.left_turn_radius,
            Movement::Right => self.right_turn_radius,
        }
    }

    /// Maximum lateral-grip speed on an arc of the given radius.
    pub fn safe_turn_speed(&self, radius: f64) -> f64 {
        (self.friction * self.gravity * radius).sqrt()
    }

    /// Point where a route's centerline meets the central zone.
    pub fn entry_point(&self, leg: Leg) -> [f64; 2] {
        let w = self.lane_width;
        let h = leg.in_heading();
        let edge = [-w * h[0], -w * h[1]];
        let r = right_of(h);
        [edge[0] + 0.5 * w * r[0], edge[1] + 0.5 * w * r[1]]
    }

    /// Point where an exit lane's centerline leaves the central zone.
    pub fn exit_point(&self, leg: Leg) -> [f64; 2] {
        let w = self.lane_width;
        let h = leg.in_heading();
        let edge = [-w * h[0], -w * h[1]];
        let r = right_of(h);
        [edge[0] - 0.5 * w * r[0], edge[1] - 0.5 * w * r[1]]
    }

    /// Centerline of the route inside the central zone, as line and arc
    /// pieces from entry point to exit point.
    fn zone_pieces(&self, route: Route) -> Vec<Piece> {
        let a = self.entry_point(route.entry_leg);
        let u = route.entry_leg.in_heading();
        match route.movement {
            Movement::Through => {
                vec![Piece::Line { from: a, dir: u, len: 2.0 * self.lane_width }]
            }
            Movement::Left | Movement::Right => {
                let b = self.exit_point(route.exit_leg);
                let v = route.exit_leg.in_heading();
                let v = [-v[0], -v[1]];
                // Corner where the two centerlines meet; the arc is tangent
                // to both at distance R from it.
                let denom = cross(u, v);
                let t = cross([b[0] - a[0], b[1] - a[1]], v) / denom;
                let corner = [a[0] + t * u[0], a[1] + t * u[1]];
                let radius = self.turn_radius(route.movement);
                let p1 = [corner[0] - radius * u[0], corner[1] - radius * u[1]];
                let p2 = [corner[0] + radius * v[0], corner[1] + radius * v[1]];
                let n = if route.movement == Movement::Left { left_of(u) } else { right_of(u) };
                let center = [p1[0] + radius * n[0], p1[1] + radius * n[1]];
                let start_angle = (p1[1] - center[1]).atan2(p1[0] - center[0]);
                let sweep =
                    if route.movement == Movement::Left { FRAC_PI_2 } else { -FRAC_PI_2 };
                let mut pieces = Vec::with_capacity(3);
                let lead = dist(a, p1);
                if lead > 1e-12 {
                    pieces.push(Piece::Line { from: a, dir: u, len: lead });
                }
                pieces.push(Piece::Arc { center, radius, start_angle, sweep });
                let tail = dist(p2, b);
                if tail > 1e-12 {
                    pieces.push(Piece::Line { from: p2, dir: v, len: tail });
                }
                pieces
            }
        }
    }

    /// Plane position on a route's zone centerline at arclength `s` past
    /// the zone entry, clamped to the transit length.
    pub fn zone_point(&self, route: Route, s: f64) -> [f64; 2] {
        let pieces = self.zone_pieces(route);
        let mut rest = s.max(0.0);
        for (i, p) in pieces.iter().enumerate() {
            if rest <= p.len() || i == pieces.len() - 1 {
                return p.point_at(rest.min(p.len()));
            }
            rest -= p.len();
        }
        unreachable!("zone path has at least one piece");
    }

    /// Length, landmark distances, and turning limits of one route.
    pub fn path(&self, route: Route) -> PathGeometry {
        let transit: f64 = self.zone_pieces(route).iter().map(Piece::len).sum();
        let d_div = self.divert_dist();
        let d_merge = d_div + transit;
        let (arc_len, radius, v_safe) = match route.movement {
            Movement::Through => (0.0, f64::INFINITY, f64::INFINITY),
            m => {
                let r = self.turn_radius(m);
                (FRAC_PI_2 * r, r, self.safe_turn_speed(r))
            }
        };
        PathGeometry {
            route,
            total_len: d_merge + self.lane_length,
            d_div,
            d_merge,
            arc_len,
            radius,
            v_safe,
        }
    }

    /// Exact conflict table over all route pairs that cross transversally
    /// inside the central zone. Errors if the layout does not produce
    /// exactly one crossing point for a pair that the fixed single-lane
    /// topology says must cross.
    pub fn crossing_table(&self) -> Result<CrossingTable, String> {
        self.validate()?;
        let routes = Route::all();
        let mut entries = Vec::new();
        for i in 0..routes.len() {
            for j in (i + 1)..routes.len() {
                let (a, b) = (routes[i], routes[j]);
                if classify_pair(a, b) != PairClass::Crossing {
                    continue;
                }
                let hits = self.zone_crossings(a, b);
                if hits.len() != 1 {
                    return Err(format!(
                        "routes {a} and {b} produced {} transversal crossings, expected 1",
                        hits.len()
                    ));
                }
                let (sa, sb) = hits[0];
                entries.push(CrossingEntry {
                    route_a: a,
                    route_b: b,
                    dist_a: self.lane_length + sa,
                    dist_b: self.lane_length + sb,
                });
            }
        }
        Ok(CrossingTable { entries })
    }

    /// Interior transversal intersections between two routes' zone
    /// centerlines, as arclength pairs measured from the zone entry.
    fn zone_crossings(&self, a: Route, b: Route) -> Vec<(f64, f64)> {
        let pa = self.zone_pieces(a);
        let pb = self.zone_pieces(b);
        let len_a: f64 = pa.iter().map(Piece::len).sum();
        let len_b: f64 = pb.iter().map(Piece::len).sum();
        let mut hits: Vec<(f64, f64, [f64; 2])> = Vec::new();
        let mut off_a = 0.0;
        for qa in &pa {
            let mut off_b = 0.0;
            for qb in &pb {
                for (sa, sb, p) in piece_intersections(qa, qb) {
                    let ga = off_a + sa;
                    let gb = off_b + sb;
                    if ga < 1e-6 || ga > len_a - 1e-6 || gb < 1e-6 || gb > len_b - 1e-6 {
                        continue;
                    }
                    let ta = qa.tangent_at(sa);
                    let tb = qb.tangent_at(sb);
                    if cross(ta, tb).abs() < 1e-9 {
                        continue;
                    }
                    if hits.iter().any(|(_, _, q)| dist(*q, p) < 1e-7) {
                        continue;
                    }
                    hits.push((ga, gb, p));
                }
                off_b += qb.len();
            }
            off_a += qa.len();
        }
        hits.into_iter().map(|(sa, sb, _)| (sa, sb)).collect()
    }
}

/// Route lengths and turning limits derived from the layout.
#[derive(Clone, Copy, Debug)]
pub struct PathGeometry {
    pub route: Route,
    /// Total route length from control-zone entry to exit, meters.
    pub total_len: f64,
    /// Distance to the central zone, meters.
    pub d_div: f64,
    /// Distance to the exit-lane merge, meters.
    pub d_merge: f64,
    /// Turning arc length, 0 for through movements.
    pub arc_len: f64,
    /// Turning radius, infinite for through movements.
    pub radius: f64,
    /// Lateral-grip speed limit on the arc, infinite for through movements.
    pub v_safe: f64,
}

/// Relationship between two routes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairClass {
    /// Identical routes share the whole path.
    CarFollowing,
    /// Same entry lane, different movements.
    Diverging,
    /// Different entry lanes joining the same exit lane.
    Merging,
    /// Paths intersect transversally inside the central zone.
    Crossing,
    /// No shared lane and no crossing point.
    Independent,
}

/// Classifies a route pair on the fixed single-lane topology. Opposing
/// left turns intersect each other twice and are treated as independent;
/// every other geometric relation reduces to lane sharing or a single
/// crossing point.
pub fn classify_pair(a: Route, b: Route) -> PairClass {
    if a == b {
        return PairClass::CarFollowing;
    }
    if a.entry_leg == b.entry_leg {
        return PairClass::Diverging;
    }
    if a.exit_leg == b.exit_leg {
        return PairClass::Merging;
    }
    let crossing = match (a.movement, b.movement) {
        (Movement::Through, Movement::Through) => {
            b.entry_leg != a.entry_leg.opposite()
        }
        (Movement::Left, Movement::Through) => crosses_left_through(a, b),
        (Movement::Through, Movement::Left) => crosses_left_through(b, a),
        (Movement::Left, Movement::Left) => b.entry_leg != a.entry_leg.opposite(),
        _ => false,
    };
    if crossing {
        PairClass::Crossing
    } else {
        PairClass::Independent
    }
}

/// A left turn crosses the through streams coming from the opposite leg
/// and from the leg it exits into.
fn crosses_left_through(left: Route, through: Route) -> bool {
    through.entry_leg == left.entry_leg.opposite() || through.entry_leg == left.exit_leg
}

/// Conflict counts of the standard single-lane four-leg diagram: every
/// transversal crossing pair, plus two merge and two diverge conflicts per
/// leg that pit each turning stream against the through stream sharing its
/// lane. Turn-on-turn lane-sharing pairs are classified by `classify_pair`
/// but are not separate diagram conflicts.
pub fn conflict_counts(spec: &IntersectionSpec) -> Result<(usize, usize, usize), String> {
    let crossing = spec.crossing_table()?.entries.len();
    let routes = Route::all();
    let mut merging = 0;
    let mut diverging = 0;
    for i in 0..routes.len() {
        for j in (i + 1)..routes.len() {
            let (a, b) = (routes[i], routes[j]);
            let with_through =
                a.movement == Movement::Through || b.movement == Movement::Through;
            match classify_pair(a, b) {
                PairClass::Merging if with_through => merging += 1,
                PairClass::Diverging if with_through => diverging += 1,
                _ => {}
            }
        }
    }
    Ok((crossing, merging, diverging))
}

#[derive(Clone, Debug)]
pub struct CrossingEntry {
    pub route_a: Route,
    pub route_b: Route,
    /// Distance from route_a's control-zone entry to the crossing point.
    pub dist_a: f64,
    pub dist_b: f64,
}

/// All crossing conflicts of the layout, one entry per unordered pair.
#[derive(Clone, Debug)]
pub struct CrossingTable {
    pub entries: Vec<CrossingEntry>,
}

impl CrossingTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Crossing distances for a pair in either order: `.0` belongs to `a`.
    pub fn get(&self, a: Route, b: Route) -> Option<(f64, f64)> {
        for e in &self.entries {
            if e.route_a == a && e.route_b == b {
                return Some((e.dist_a, e.dist_b));
            }
            if e.route_a == b && e.route_b == a {
                return Some((e.dist_b, e.dist_a));
            }
        }
        None
    }

    /// Every crossing involving `route`: the opponent, own distance, and
    /// the opponent's distance.
    pub fn conflicts_of(&self, route: Route) -> Vec<(Route, f64, f64)> {
        let mut out = Vec::new();
        for e in &self.entries {
            if e.route_a == route {
                out.push((e.route_b, e.dist_a, e.dist_b));
            } else if e.route_b == route {
                out.push((e.route_a, e.dist_b, e.dist_a));
            }
        }
        out
    }
}

/// Centerline piece: a directed segment or a circular arc with signed
/// sweep (positive counterclockwise).
#[derive(Clone, Copy, Debug)]
enum Piece {
    Line { from: [f64; 2], dir: [f64; 2], len: f64 },
    Arc { center: [f64; 2], radius: f64, start_angle: f64, sweep: f64 },
}

impl Piece {
    fn len(&self) -> f64 {
        match *self {
            Piece::Line { len, .. } => len,
            Piece::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    fn point_at(&self, s: f64) -> [f64; 2] {
        match *self {
            Piece::Line { from, dir, .. } => [from[0] + s * dir[0], from[1] + s * dir[1]],
            Piece::Arc { center, radius, start_angle, sweep } => {
                let ang = start_angle + sweep.signum() * s / radius;
                [center[0] + radius * ang.cos(), center[1] + radius * ang.sin()]
            }
        }
    }

    fn tangent_at(&self, s: f64) -> [f64; 2] {
        match *self {
            Piece::Line { dir, .. } => dir,
            Piece::Arc { radius, start_angle, sweep, .. } => {
                let ang = start_angle + sweep.signum() * s / radius;
                let sgn = sweep.signum();
                [-sgn * ang.sin(), sgn * ang.cos()]
            }
        }
    }

    /// Arclength of `p` along the arc when its angle lies inside the
    /// sweep, with a small angular tolerance at both ends.
    fn arc_param(&self, p: [f64; 2]) -> Option<f64> {
        let Piece::Arc { center, radius, start_angle, sweep } = *self else {
            return None;
        };
        let ang = (p[1] - center[1]).atan2(p[0] - center[0]);
        let span = sweep.abs();
        let fwd = if sweep >= 0.0 { ang - start_angle } else { start_angle - ang };
        let mut d = fwd.rem_euclid(2.0 * PI);
        if d > 2.0 * PI - 1e-9 {
            d = 0.0;
        }
        if d <= span + 1e-9 {
            Some((radius * d).min(radius * span))
        } else {
            None
        }
    }
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn right_of(h: [f64; 2]) -> [f64; 2] {
    [h[1], -h[0]]
}

fn left_of(h: [f64; 2]) -> [f64; 2] {
    [-h[1], h[0]]
}

/// Intersection points of two pieces as arclength pairs plus the point.
fn piece_intersections(a: &Piece, b: &Piece) -> Vec<(f64, f64, [f64; 2])> {
    match (a, b) {
        (Piece::Line { .. }, Piece::Line { .. }) => line_line(a, b),
        (Piece::Line { .. }, Piece::Arc { .. }) => line_arc(a, b, false),
        (Piece::Arc { .. }, Piece::Line { .. }) => line_arc(b, a, true),
        (Piece::Arc { .. }, Piece::Arc { .. }) => arc_arc(a, b),
    }
}

fn line_line(a: &Piece, b: &Piece) -> Vec<(f64, f64, [f64; 2])> {
    let (Piece::Line { from: p, dir: u, len: lu }, Piece::Line { from: q, dir: v, len: lv }) =
        (a, b)
    else {
        unreachable!();
    };
    let den = cross(*u, *v);
    if den.abs() < 1e-12 {
        return Vec::new();
    }
    let pq = [q[0] - p[0], q[1] - p[1]];
    let t = cross(pq, *v) / den;
    let s = cross(pq, *u) / den;
    if t < -1e-9 || t > lu + 1e-9 || s < -1e-9 || s > lv + 1e-9 {
        return Vec::new();
    }
    let point = [p[0] + t * u[0], p[1] + t * u[1]];
    vec![(t.clamp(0.0, *lu), s.clamp(0.0, *lv), point)]
}

fn line_arc(line: &Piece, arc: &Piece, swapped: bool) -> Vec<(f64, f64, [f64; 2])> {
    let Piece::Line { from, dir, len } = *line else { unreachable!() };
    let Piece::Arc { center, radius, .. } = *arc else { unreachable!() };
    let e = [from[0] - center[0], from[1] - center[1]];
    let bq = 2.0 * (dir[0] * e[0] + dir[1] * e[1]);
    let cq = e[0] * e[0] + e[1] * e[1] - radius * radius;
    let mut out = Vec::new();
    for t in quadratic_roots(1.0, bq, cq).iter() {
        if t < -1e-9 || t > len + 1e-9 {
            continue;
        }
        let p = [from[0] + t * dir[0], from[1] + t * dir[1]];
        if let Some(s_arc) = arc.arc_param(p) {
            let s_line = t.clamp(0.0, len);
            if swapped {
                out.push((s_arc, s_line, p));
            } else {
                out.push((s_line, s_arc, p));
            }
        }
    }
    out
}

fn arc_arc(a: &Piece, b: &Piece) -> Vec<(f64, f64, [f64; 2])> {
    let Piece::Arc { center: c1, radius: r1, .. } = *a else { unreachable!() };
    let Piece::Arc { center: c2, radius: r2, .. } = *b else { unreachable!() };
    let d = dist(c1, c2);
    if d < 1e-12 {
        return Vec::new();
    }
    let off = (d * d + r1 * r1 - r2 * r2) / (2.0 * d);
    let h2 = r1 * r1 - off * off;
    if h2 < -1e-12 {
        return Vec::new();
    }
    let h = h2.max(0.0).sqrt();
    let u = [(c2[0] - c1[0]) / d, (c2[1] - c1[1]) / d];
    let base = [c1[0] + off * u[0], c1[1] + off * u[1]];
    let perp = [-u[1], u[0]];
    let mut pts = vec![[base[0] + h * perp[0], base[1] + h * perp[1]]];
    if h > 1e-9 {
        pts.push([base[0] - h * perp[0], base[1] - h * perp[1]]);
    }
    let mut out = Vec::new();
    for p in pts {
        if let (Some(sa), Some(sb)) = (a.arc_param(p), b.arc_param(p)) {
            out.push((sa, sb, p));
        }
    }
    out
}
