//! Small numeric utilities: real roots of low-degree polynomials, bracketed
//! scalar minimization. No external state, no allocation in hot paths.

/// Real roots of a polynomial up to degree three, unordered, possibly with
/// duplicates collapsed. Fixed-capacity to avoid allocation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Roots {
    vals: [f64; 3],
    n: usize,
}

impl Roots {
    fn push(&mut self, r: f64) {
        if r.is_finite() && self.n < 3 {
            self.vals[self.n] = r;
            self.n += 1;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.vals[..self.n].iter().copied()
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Smallest root inside `[lo, hi]`, if any.
    pub fn smallest_in(&self, lo: f64, hi: f64) -> Option<f64> {
        let mut best: Option<f64> = None;
        for r in self.iter() {
            if r >= lo && r <= hi {
                best = Some(best.map_or(r, |b: f64| b.min(r)));
            }
        }
        best
    }
}

/// Real roots of `a x² + b x + c = 0`, degenerating gracefully to the
/// linear case.
pub fn quadratic_roots(a: f64, b: f64, c: f64) -> Roots {
    let mut out = Roots::default();
    if a.abs() < 1e-300 {
        if b.abs() > 1e-300 {
            out.push(-c / b);
        }
        return out;
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return out;
    }
    // Citardauq form for the root that would otherwise cancel.
    let sq = disc.sqrt();
    let q = -0.5 * (b + b.signum() * sq);
    if b == 0.0 {
        let r = (sq / (2.0 * a)).abs();
        out.push(r);
        if disc > 0.0 {
            out.push(-r);
        }
        return out;
    }
    out.push(q / a);
    if q.abs() > 1e-300 {
        out.push(c / q);
    } else {
        out.push(0.0);
    }
    out
}

/// Real roots of `a3 x³ + a2 x² + a1 x + a0 = 0`.
///
/// Uses the trigonometric/hyperbolic solution of the depressed cubic and
/// polishes each root with two Newton steps on the original polynomial.
pub fn cubic_roots(a3: f64, a2: f64, a1: f64, a0: f64) -> Roots {
    let scale = a3.abs().max(a2.abs()).max(a1.abs()).max(a0.abs());
    if scale == 0.0 {
        return Roots::default();
    }
    if a3.abs() < 1e-12 * scale {
        return quadratic_roots(a2, a1, a0);
    }
    let (b, c, d) = (a2 / a3, a1 / a3, a0 / a3);
    // Depress: x = y - b/3, y^3 + p y + q = 0.
    let shift = b / 3.0;
    let p = c - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;

    let mut out = Roots::default();
    let poly = |x: f64| ((a3 * x + a2) * x + a1) * x + a0;
    let dpoly = |x: f64| (3.0 * a3 * x + 2.0 * a2) * x + a1;
    let mut push_polished = |y: f64| {
        let mut x = y - shift;
        for _ in 0..2 {
            let dp = dpoly(x);
            if dp.abs() > 1e-300 {
                let step = poly(x) / dp;
                if step.is_finite() {
                    x -= step;
                }
            }
        }
        out.push(x);
    };

    let disc = -(4.0 * p * p * p + 27.0 * q * q);
    let tiny = 1e-14 * (1.0 + p.abs() + q.abs());
    if p.abs() < tiny && q.abs() < tiny {
        push_polished(0.0);
    } else if disc > 0.0 {
        // Three distinct real roots.
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        for k in 0..3 {
            push_polished(m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos());
        }
    } else if disc.abs() <= tiny * tiny && p < 0.0 {
        // Double root plus a simple root.
        push_polished(-3.0 * q / (2.0 * p));
        push_polished(3.0 * q / p);
    } else {
        // One real root: stable Cardano (pick the large-magnitude cube root
        // first, recover its partner from the product constraint).
        let s = (q * q / 4.0 + p * p * p / 27.0).max(0.0).sqrt();
        let t1 = -q / 2.0 - q.signum() * s;
        let u = t1.cbrt();
        let v = if u.abs() > 1e-300 { -p / (3.0 * u) } else { 0.0 };
        push_polished(u + v);
    }
    out
}

/// Brent minimization of `f` on `[a, b]`. Returns the best point seen,
/// which protects against drift once the function is flat at machine
/// precision around the minimum.
pub fn brent_min<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64, max_iter: usize) -> (f64, f64) {
    const GOLD: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut x = a + GOLD * (b - a);
    let mut w = x;
    let mut v = x;
    let mut fx = f(x);
    let mut fw = fx;
    let mut fv = fx;
    let mut best_x = x;
    let mut best_f = fx;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        let tol1 = tol * x.abs().max(1.0) + 1e-15;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut use_golden = true;
        if e.abs() > tol1 {
            // Parabolic interpolation through (v, w, x).
            let r = (x - w) * (fx - fv);
            let q0 = (x - v) * (fx - fw);
            let mut p = (x - v) * q0 - (x - w) * r;
            let mut q = 2.0 * (q0 - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_old = e;
            e = d;
            if p.abs() < (0.5 * q * e_old).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if m > x { tol1 } else { -tol1 };
                }
                use_golden = false;
            }
        }
        if use_golden {
            e = if x < m { b - x } else { a - x };
            d = GOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + if d > 0.0 { tol1 } else { -tol1 } };
        let fu = f(u);
        if fu < best_f {
            best_f = fu;
            best_x = u;
        }
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (best_x, best_f)
}

/// Coarse scan of `f` over `n+1` equispaced points on `[a, b]`; returns the
/// best sample. Infinite values mark infeasible evaluations and lose.
pub fn grid_scan_min<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n: usize) -> (f64, f64) {
    let mut best_x = a;
    let mut best_f = f64::INFINITY;
    for i in 0..=n {
        let x = a + (b - a) * i as f64 / n as f64;
        let fx = f(x);
        if fx < best_f {
            best_f = fx;
            best_x = x;
        }
    }
    (best_x, best_f)
}

/// Scan plus Brent refinement around the best cell. `f` may return
/// `f64::INFINITY` for infeasible arguments; the refinement bracket is then
/// clipped to the scanned neighbors of the best sample.
pub fn scan_then_brent<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    n: usize,
    tol: f64,
) -> Option<(f64, f64)> {
    let step = (b - a) / n as f64;
    let (sx, sf) = grid_scan_min(&mut f, a, b, n);
    if !sf.is_finite() {
        return None;
    }
    let lo = (sx - step).max(a);
    let hi = (sx + step).min(b);
    let (bx, bf) = brent_min(&mut f, lo, hi, tol, 80);
    Some(if bf < sf { (bx, bf) } else { (sx, sf) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted(r: &Roots) -> Vec<f64> {
        let mut v: Vec<f64> = r.iter().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn quadratic_basic() {
        let r = sorted(&quadratic_roots(1.0, -3.0, 2.0));
        assert_eq!(r.len(), 2);
        assert!((r[0] - 1.0).abs() < 1e-12 && (r[1] - 2.0).abs() < 1e-12);
        assert!(quadratic_roots(1.0, 0.0, 1.0).is_empty());
        let lin = sorted(&quadratic_roots(0.0, 2.0, -5.0));
        assert_eq!(lin.len(), 1);
        assert!((lin[0] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn cubic_three_real() {
        // (x-1)(x-2)(x-3) = x^3 - 6x^2 + 11x - 6
        let r = sorted(&cubic_roots(1.0, -6.0, 11.0, -6.0));
        assert_eq!(r.len(), 3);
        for (got, want) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn cubic_one_real() {
        // (x-2)(x^2+1) = x^3 - 2x^2 + x - 2
        let r = sorted(&cubic_roots(1.0, -2.0, 1.0, -2.0));
        assert_eq!(r.len(), 1);
        assert!((r[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn cubic_residuals_small() {
        // Randomized coefficient sweep; every reported root must satisfy
        // the polynomial to tight residual.
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 20.0 - 10.0
        };
        for _ in 0..500 {
            let (a3, a2, a1, a0) = (next(), next(), next(), next());
            if a3.abs() < 1e-3 {
                continue;
            }
            let r = cubic_roots(a3, a2, a1, a0);
            let scale = a3.abs().max(a2.abs()).max(a1.abs()).max(a0.abs());
            for x in r.iter() {
                let res = ((a3 * x + a2) * x + a1) * x + a0;
                let bound = 1e-7 * scale * x.abs().max(1.0).powi(3);
                assert!(res.abs() <= bound, "res {res} at root {x}");
            }
        }
    }

    #[test]
    fn cubic_degenerate_to_quadratic() {
        let r = sorted(&cubic_roots(0.0, 1.0, -3.0, 2.0));
        assert_eq!(r.len(), 2);
        assert!((r[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn brent_finds_parabola_min() {
        let (x, fx) = brent_min(|x| (x - 1.3).powi(2) + 0.5, -4.0, 4.0, 1e-12, 200);
        assert!((x - 1.3).abs() < 1e-9);
        assert!((fx - 0.5).abs() < 1e-12);
    }

    #[test]
    fn scan_then_brent_skips_infeasible() {
        let f = |x: f64| if x < 0.5 { f64::INFINITY } else { (x - 2.0).powi(2) };
        let (x, _) = scan_then_brent(f, 0.0, 5.0, 32, 1e-10).unwrap();
        assert!((x - 2.0).abs() < 1e-8);
        let all_bad = |_x: f64| f64::INFINITY;
        assert!(scan_then_brent(all_bad, 0.0, 1.0, 8, 1e-10).is_none());
    }
}
