//! Piecewise-polynomial speed profiles.
//!
//! A profile is an ordered list of segments. Within a segment the position
//! is a cubic in elapsed segment time, so the speed is quadratic and the
//! acceleration affine. Position and speed are continuous across segment
//! junctions by construction.

use crate::energy::{battery_power, segment_energy, PowertrainParams};
use crate::ocp::Limits;

/// One trajectory piece: position cubic in elapsed time `k` in
/// `[0, duration]`, `x(k) = c[0] + c[1] k + c[2] k² + c[3] k³`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    /// Start time of the piece, seconds from profile start.
    pub t_start: f64,
    /// Piece length in seconds; always positive.
    pub duration: f64,
    /// Position cubic coefficients in elapsed piece time.
    pub c: [f64; 4],
}

impl Segment {
    /// Builds a piece from speed-polynomial data: start position `x0`,
    /// start speed `v0`, speed slope `b` and curvature `cq`
    /// (`v(k) = v0 + b k + cq k²`).
    pub fn from_speed(t_start: f64, x0: f64, v0: f64, b: f64, cq: f64, duration: f64) -> Self {
        Segment { t_start, duration, c: [x0, v0, b / 2.0, cq / 3.0] }
    }

    #[inline]
    pub fn pos(&self, k: f64) -> f64 {
        ((self.c[3] * k + self.c[2]) * k + self.c[1]) * k + self.c[0]
    }

    #[inline]
    pub fn speed(&self, k: f64) -> f64 {
        (3.0 * self.c[3] * k + 2.0 * self.c[2]) * k + self.c[1]
    }

    #[inline]
    pub fn accel(&self, k: f64) -> f64 {
        6.0 * self.c[3] * k + 2.0 * self.c[2]
    }

    #[inline]
    pub fn end_pos(&self) -> f64 {
        self.pos(self.duration)
    }

    #[inline]
    pub fn end_speed(&self) -> f64 {
        self.speed(self.duration)
    }

    /// Minimum speed over the piece; exact, via the parabola vertex.
    pub fn min_speed(&self) -> f64 {
        let mut m = self.speed(0.0).min(self.end_speed());
        let a3 = 3.0 * self.c[3];
        if a3.abs() > 0.0 {
            let k_v = -self.c[2] / a3;
            if k_v > 0.0 && k_v < self.duration {
                m = m.min(self.speed(k_v));
            }
        }
        m
    }

    /// Maximum speed over the piece; exact, via the parabola vertex.
    pub fn max_speed(&self) -> f64 {
        let mut m = self.speed(0.0).max(self.end_speed());
        let a3 = 3.0 * self.c[3];
        if a3.abs() > 0.0 {
            let k_v = -self.c[2] / a3;
            if k_v > 0.0 && k_v < self.duration {
                m = m.max(self.speed(k_v));
            }
        }
        m
    }

    /// Maximum acceleration magnitude over the piece; the acceleration is
    /// affine so the extremes sit at the endpoints.
    pub fn max_abs_accel(&self) -> f64 {
        self.accel(0.0).abs().max(self.accel(self.duration).abs())
    }

    /// Exact battery energy over the piece.
    pub fn energy(&self, pt: &PowertrainParams) -> f64 {
        let d = self.end_pos() - self.c[0];
        segment_energy(self.c[1], self.end_speed(), d, self.duration, pt)
    }
}

/// Piecewise cubic position / quadratic speed trajectory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpeedProfile {
    pub segments: Vec<Segment>,
}

impl SpeedProfile {
    /// Single-piece profile from speed-polynomial data, starting at
    /// position 0, time 0.
    pub fn single(v0: f64, b: f64, cq: f64, duration: f64) -> Self {
        SpeedProfile { segments: vec![Segment::from_speed(0.0, 0.0, v0, b, cq, duration)] }
    }

    /// Assembles a profile from consecutive `(v0, b, cq, duration)` pieces,
    /// chaining position and time so the result is continuous.
    pub fn from_pieces(pieces: &[(f64, f64, f64, f64)]) -> Self {
        let mut segments = Vec::with_capacity(pieces.len());
        let mut t = 0.0;
        let mut x = 0.0;
        for &(v0, b, cq, dur) in pieces {
            let seg = Segment::from_speed(t, x, v0, b, cq, dur);
            t += dur;
            x = seg.end_pos();
            segments.push(seg);
        }
        SpeedProfile { segments }
    }

    pub fn duration(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.t_start + s.duration)
    }

    pub fn end_pos(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.end_pos())
    }

    pub fn end_speed(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.end_speed())
    }

    pub fn start_speed(&self) -> f64 {
        self.segments.first().map_or(0.0, |s| s.c[1])
    }

    /// Segment containing time `t`, with `t` clamped into the profile span.
    /// Queries beyond the end evaluate the last segment's polynomial
    /// extrapolated, which callers use for partial-step bookkeeping.
    fn locate(&self, t: f64) -> (&Segment, f64) {
        debug_assert!(!self.segments.is_empty());
        for seg in &self.segments {
            if t <= seg.t_start + seg.duration {
                return (seg, (t - seg.t_start).max(0.0));
            }
        }
        let last = self.segments.last().unwrap();
        (last, t - last.t_start)
    }

    pub fn position(&self, t: f64) -> f64 {
        let (seg, k) = self.locate(t);
        seg.pos(k)
    }

    pub fn speed(&self, t: f64) -> f64 {
        let (seg, k) = self.locate(t);
        seg.speed(k)
    }

    pub fn accel(&self, t: f64) -> f64 {
        let (seg, k) = self.locate(t);
        seg.accel(k)
    }

    pub fn battery_power_at(&self, t: f64, pt: &PowertrainParams) -> f64 {
        let (seg, k) = self.locate(t);
        battery_power(seg.accel(k) + pt.h, seg.speed(k), pt)
    }

    /// Exact trip energy: sum of per-segment closed forms.
    pub fn energy(&self, pt: &PowertrainParams) -> f64 {
        self.segments.iter().map(|s| s.energy(pt)).sum()
    }

    /// Trip energy by composite Simpson quadrature of the battery power,
    /// `n` subintervals per segment. Used as an independent cross-check of
    /// the closed form: it only samples the power pointwise.
    pub fn energy_quadrature(&self, pt: &PowertrainParams, n: usize) -> f64 {
        let n = n.max(2) & !1; // even subinterval count
        let mut total = 0.0;
        for seg in &self.segments {
            let hstep = seg.duration / n as f64;
            let pw = |k: f64| battery_power(seg.accel(k) + pt.h, seg.speed(k), pt);
            let mut acc = pw(0.0) + pw(seg.duration);
            for i in 1..n {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * pw(i as f64 * hstep);
            }
            total += acc * hstep / 3.0;
        }
        total
    }

    /// Global minimum speed; exact.
    pub fn min_speed(&self) -> f64 {
        self.segments.iter().map(|s| s.min_speed()).fold(f64::INFINITY, f64::min)
    }

    /// Global maximum speed; exact.
    pub fn max_speed(&self) -> f64 {
        self.segments.iter().map(|s| s.max_speed()).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Global maximum acceleration magnitude; exact.
    pub fn max_abs_accel(&self) -> f64 {
        self.segments.iter().map(|s| s.max_abs_accel()).fold(0.0, f64::max)
    }

    /// Feasibility screen: nonnegative speed and bounded acceleration.
    pub fn is_feasible(&self, lim: &Limits) -> bool {
        self.min_speed() >= -crate::ocp::FEAS_EPS
            && self.max_abs_accel() <= lim.a_max + crate::ocp::FEAS_EPS
    }

    /// First time at which the position reaches `x`, or `None` when the
    /// profile never does. Positions are nondecreasing for feasible
    /// profiles, so the first root is the crossing time.
    pub fn time_at_position(&self, x: f64) -> Option<f64> {
        for seg in &self.segments {
            let end = seg.end_pos();
            if x > end + 1e-12 {
                continue;
            }
            // Solve c3 k^3 + c2 k^2 + c1 k + (c0 - x) = 0 inside the piece.
            let roots = crate::ocp::numeric::cubic_roots(seg.c[3], seg.c[2], seg.c[1], seg.c[0] - x);
            let mut best: Option<f64> = None;
            for r in roots.iter() {
                if r >= -1e-9 && r <= seg.duration + 1e-9 {
                    let r = r.clamp(0.0, seg.duration);
                    best = Some(best.map_or(r, |b: f64| b.min(r)));
                }
            }
            if let Some(k) = best {
                return Some(seg.t_start + k);
            }
        }
        None
    }

    /// Largest gap in position or speed across consecutive junctions;
    /// zero for well-formed profiles up to rounding.
    pub fn junction_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for w in self.segments.windows(2) {
            let dp = (w[0].end_pos() - w[1].c[0]).abs();
            let dv = (w[0].end_speed() - w[1].c[1]).abs();
            worst = worst.max(dp).max(dv);
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PT: PowertrainParams = PowertrainParams { p0: 1.0, p1: 0.1, h: 0.05 };

    fn two_piece() -> SpeedProfile {
        // Accelerate 8 -> 10 over 5 s, then hold 10 for 5 s.
        SpeedProfile::from_pieces(&[(8.0, 0.4, 0.0, 5.0), (10.0, 0.0, 0.0, 5.0)])
    }

    #[test]
    fn continuity_and_bookkeeping() {
        let p = two_piece();
        assert!(p.junction_defect() < 1e-12);
        assert!((p.duration() - 10.0).abs() < 1e-12);
        // 8*5 + 0.2*25 = 45, then + 50.
        assert!((p.end_pos() - 95.0).abs() < 1e-12);
        assert!((p.speed(5.0) - 10.0).abs() < 1e-12);
        assert!((p.position(5.0) - 45.0).abs() < 1e-12);
    }

    #[test]
    fn energy_additive_over_concatenation() {
        let p = two_piece();
        let total = p.energy(&PT);
        let parts: f64 = p.segments.iter().map(|s| s.energy(&PT)).sum();
        assert!((total - parts).abs() < 1e-12);
    }

    #[test]
    fn quadrature_matches_closed_form() {
        let p = SpeedProfile::from_pieces(&[(6.0, 0.9, -0.07, 7.0), (9.87, -0.08, 0.004, 6.0)]);
        let e = p.energy(&PT);
        let q = p.energy_quadrature(&PT, 64);
        assert!((e - q).abs() <= 1e-10 * e.abs().max(1.0), "{e} vs {q}");
    }

    #[test]
    fn min_speed_uses_vertex() {
        // v(k) = 5 - 2k + 0.2 k^2 dips to 0 at k = 5.
        let p = SpeedProfile::single(5.0, -2.0, 0.2, 10.0);
        assert!(p.min_speed().abs() < 1e-12);
        assert!((p.max_speed() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn time_at_position_inverts_position() {
        let p = two_piece();
        for &x in &[1.0, 20.0, 44.9, 45.0, 60.0, 94.0] {
            let t = p.time_at_position(x).unwrap();
            assert!((p.position(t) - x).abs() < 1e-9, "x={x}");
        }
        assert!(p.time_at_position(200.0).is_none());
    }

    #[test]
    fn zero_profile_energy() {
        let p = SpeedProfile::default();
        assert_eq!(p.energy(&PT), 0.0);
    }
}
