//! C¹ chains of circular arcs approximating a curve with matched length,
//! endpoints and end tangents.

use serde::Serialize;

use crate::curvegeom::{add, norm, scale, sub, PieceSpec, PlanarCurve, Point};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ArcElement {
    pub s_start: f64,
    pub s_end: f64,
    pub kappa: f64,
    pub start: Point,
    pub theta_start: f64,
    /// Curvature range of the source on this subinterval.
    pub kappa_lo: f64,
    pub kappa_hi: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Join {
    pub s: f64,
    pub position_gap: f64,
    pub angle_gap: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Closure {
    /// Fail with a refinement request when the endpoint cannot be matched.
    Strict,
    /// Return the best bounded fit and report the residual.
    BestEffort,
}

#[derive(Clone, Debug, Serialize)]
pub struct ArcSpline {
    /// Arc elements over the curved support, in source arc length.
    pub elements: Vec<ArcElement>,
    pub joins: Vec<Join>,
    /// |Γ̂(s_max) - Γ(s_max)| after closure.
    pub end_position_gap: f64,
    pub end_angle_gap: f64,
    pub newton_steps: usize,
    #[serde(skip)]
    curve: PlanarCurve,
    #[serde(skip)]
    shift: f64,
}

impl ArcSpline {
    /// The spline as a curve (straight tails of the source included).
    pub fn curve(&self) -> &PlanarCurve {
        &self.curve
    }

    /// Arc length on the spline curve of the source parameter s.
    pub fn to_spline_s(&self, s: f64) -> f64 {
        s + self.shift
    }

    pub fn length(&self) -> f64 {
        self.elements.iter().map(|e| e.s_end - e.s_start).sum()
    }
}

// source curvature range on [lo, hi]; κ is monotone per piece
fn kappa_range_on(curve: &PlanarCurve, lo: f64, hi: f64) -> (f64, f64) {
    let mut r = (f64::INFINITY, f64::NEG_INFINITY);
    for p in curve.pieces() {
        let l = lo.max(p.s_start);
        let h = hi.min(p.s_end);
        if h < l || (h == l && hi > lo) {
            continue;
        }
        for u in [l - p.s_start, h - p.s_start] {
            let k = p.spec.kappa(u);
            r.0 = r.0.min(k);
            r.1 = r.1.max(k);
        }
    }
    if r.0 > r.1 {
        (0.0, 0.0)
    } else {
        r
    }
}

fn arc_end(start: Point, theta: f64, kappa: f64, len: f64) -> Point {
    let half = 0.5 * kappa * len;
    let chord = if half.abs() < 1e-8 { len * (1.0 - half * half / 6.0) } else { len * half.sin() / half };
    add(start, scale([(theta + half).cos(), (theta + half).sin()], chord))
}

// chain arcs from (p, θ) over equal lengths h; returns start points and angles
fn chain(p0: Point, th0: f64, kappas: &[f64], h: f64) -> (Vec<Point>, Vec<f64>) {
    let mut pts = Vec::with_capacity(kappas.len() + 1);
    let mut ths = Vec::with_capacity(kappas.len() + 1);
    let (mut p, mut th) = (p0, th0);
    pts.push(p);
    ths.push(th);
    for &k in kappas {
        p = arc_end(p, th, k, h);
        th += k * h;
        pts.push(p);
        ths.push(th);
    }
    (pts, ths)
}

/// Arc spline with n elements over the curved support, strict closure.
pub fn approximate(curve: &PlanarCurve, n: usize) -> Result<ArcSpline> {
    approximate_with(curve, n, Closure::Strict)
}

pub fn approximate_with(curve: &PlanarCurve, n: usize, mode: Closure) -> Result<ArcSpline> {
    if n == 0 {
        return Err(Error::Validation("arc spline needs n >= 1".into()));
    }
    if curve.is_straight() {
        return Err(Error::Validation("nothing to approximate on a straight line".into()));
    }
    let (s_min, s_max) = curve.curved_support();
    let len = s_max - s_min;
    let h = len / n as f64;
    let nodes: Vec<f64> = (0..=n).map(|k| if k == n { s_max } else { s_min + h * k as f64 }).collect();
    let bounds: Vec<(f64, f64)> = (0..n).map(|k| kappa_range_on(curve, nodes[k], nodes[k + 1])).collect();
    let mean: Vec<f64> = (0..n).map(|k| curve.kappa_integral(nodes[k], nodes[k + 1]) / h).collect();

    // angle defect of the mean arc, averaged over the element:
    // d_k = (1/h) ∫ ∫_{s_k}^s (κ - κ̄_k)
    let gauss = crate::quad::GaussRule::new(12);
    let breaks = curve.breakpoints();
    let defect: Vec<f64> = (0..n)
        .map(|k| {
            let inner = crate::quad::clip_breaks(nodes[k], nodes[k + 1], &breaks);
            gauss.over_breaks(&inner, h, |s| curve.kappa_integral(nodes[k], s) - mean[k] * (s - nodes[k])) / h
        })
        .collect();
    let mut eps = vec![0.0; n + 1];
    for k in 1..n {
        eps[k] = 0.5 * (defect[k - 1] + defect[k]);
    }
    let mut kap: Vec<f64> = (0..n)
        .map(|k| (mean[k] + (eps[k + 1] - eps[k]) / h).clamp(bounds[k].0, bounds[k].1))
        .collect();

    let p0 = curve.position(s_min);
    let th0 = curve.theta(s_min);
    let p_end = curve.position(s_max);
    let total_turn = curve.kappa_integral(s_min, s_max);
    let tol = 1e-13 * len.max(1.0);

    let mut steps = 0;
    let mut fixed: Vec<bool> = bounds.iter().map(|b| b.1 - b.0 <= 0.0).collect();
    let residual = |kap: &[f64]| -> ([f64; 3], Vec<Point>) {
        let (pts, _) = chain(p0, th0, kap, h);
        let e = sub(pts[n], p_end);
        let turn: f64 = kap.iter().sum::<f64>() * h;
        ([e[0], e[1], turn - total_turn], pts)
    };
    let (mut r, mut pts) = residual(&kap);
    while steps < 60 && (r[0].hypot(r[1]) > tol || r[2].abs() > 1e-14 * total_turn.abs().max(1.0)) {
        steps += 1;
        let free: Vec<usize> = (0..n).filter(|&k| !fixed[k]).collect();
        // columns: d(end)/dκ_k ≈ h J (P_end - P_mid,k), d(turn)/dκ_k = h
        let cols: Vec<[f64; 3]> = free
            .iter()
            .map(|&k| {
                let mid = arc_end(pts[k], th0 + h * kap[..k].iter().sum::<f64>(), kap[k], 0.5 * h);
                let d = sub(pts[n], mid);
                [-h * d[1], h * d[0], h]
            })
            .collect();
        let mut m = [[0.0; 3]; 3];
        for c in &cols {
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] += c[i] * c[j];
                }
            }
        }
        let y = match solve3(m, [-r[0], -r[1], -r[2]]) {
            Some(y) => y,
            None => break,
        };
        for (c, &k) in cols.iter().zip(free.iter()) {
            let dk = c[0] * y[0] + c[1] * y[1] + c[2] * y[2];
            let v = kap[k] + dk;
            if v < bounds[k].0 || v > bounds[k].1 {
                kap[k] = v.clamp(bounds[k].0, bounds[k].1);
                fixed[k] = true;
            } else {
                kap[k] = v;
            }
        }
        let next = residual(&kap);
        r = next.0;
        pts = next.1;
        if fixed.iter().all(|&f| f) {
            break;
        }
    }
    let gap = r[0].hypot(r[1]);
    let angle_gap = r[2].abs();
    if mode == Closure::Strict && (gap > 1e3 * tol || angle_gap > 1e-12 * total_turn.abs().max(1.0)) {
        return Err(Error::Refine(format!(
            "endpoint gap {gap:e} and angle gap {angle_gap:e} cannot be closed within the curvature bounds at n = {n}"
        )));
    }

    let (pts, ths) = chain(p0, th0, &kap, h);
    let elements: Vec<ArcElement> = (0..n)
        .map(|k| ArcElement {
            s_start: nodes[k],
            s_end: nodes[k + 1],
            kappa: kap[k],
            start: pts[k],
            theta_start: ths[k],
            kappa_lo: bounds[k].0,
            kappa_hi: bounds[k].1,
        })
        .collect();
    let joins = (1..n)
        .map(|k| {
            let end = arc_end(pts[k - 1], ths[k - 1], kap[k - 1], h);
            Join {
                s: nodes[k],
                position_gap: norm(sub(end, pts[k])),
                angle_gap: (ths[k - 1] + kap[k - 1] * h - ths[k]).abs(),
            }
        })
        .collect();

    // straight lead-in and tail copied from the source
    let src = curve.pieces();
    let (ls, _) = curve.listed_range();
    let mut specs = vec![];
    if s_min > ls {
        specs.push(PieceSpec::Straight { length: s_min - ls });
    }
    specs.extend(kap.iter().map(|&k| PieceSpec::Arc { length: h, kappa: k }));
    let le = src.last().unwrap().s_end;
    if le > s_max {
        specs.push(PieceSpec::Straight { length: le - s_max });
    }
    let spline_curve = PlanarCurve::build_with(&specs, curve.start_point(), curve.start_heading())?;
    let shift = spline_curve.listed_range().0 - ls;
    Ok(ArcSpline {
        elements,
        joins,
        end_position_gap: gap,
        end_angle_gap: angle_gap,
        newton_steps: steps,
        curve: spline_curve,
        shift,
    })
}

fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&m);
    let scale = m.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
    if d.abs() <= 1e-28 * scale.powi(3) || !d.is_finite() {
        return None;
    }
    let mut x = [0.0; 3];
    for (i, xi) in x.iter_mut().enumerate() {
        let mut mi = m;
        for r in 0..3 {
            mi[r][i] = b[r];
        }
        *xi = det(&mi) / d;
    }
    Some(x)
}

/// Sup-norm distance between derivatives of order m over the curved support.
/// For m = 2 the comparison skips the cells that contain a jump of κ̂.
pub fn error_norms(curve: &PlanarCurve, spline: &ArcSpline, m: usize) -> f64 {
    let n = spline.elements.len();
    let per = (4000 / n).max(50);
    let hc = spline.curve();
    let mut worst: f64 = 0.0;
    for e in &spline.elements {
        let h = e.s_end - e.s_start;
        for j in 0..=per {
            let s = e.s_start + h * j as f64 / per as f64;
            let sh = spline.to_spline_s(s);
            let v = match m {
                0 => norm(sub(curve.position(s), hc.position(sh))),
                1 => norm(sub(curve.tangent(s), hc.tangent(sh))),
                _ => {
                    if j == 0 || j == per {
                        continue;
                    }
                    let a = scale(curve.normal(s), curve.kappa(s));
                    let b = scale(hc.normal(sh), e.kappa);
                    norm(sub(a, b))
                }
            };
            worst = worst.max(v);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clothoid() -> PlanarCurve {
        PlanarCurve::build(&[PieceSpec::Poly { length: 1.0, coeffs: vec![0.0, 1.0] }]).unwrap()
    }

    fn slope(ns: &[usize], errs: &[f64]) -> f64 {
        let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
        let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
        let mx = xs.iter().sum::<f64>() / xs.len() as f64;
        let my = ys.iter().sum::<f64>() / ys.len() as f64;
        let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        -num / den
    }

    #[test]
    fn single_arc_is_a_fixed_point() {
        let c = PlanarCurve::build(&[
            PieceSpec::Straight { length: 0.5 },
            PieceSpec::Arc { length: 1.3, kappa: 0.7 },
            PieceSpec::Straight { length: 0.2 },
        ])
        .unwrap();
        for n in [1, 3, 8] {
            let sp = approximate(&c, n).unwrap();
            assert!(sp.elements.iter().all(|e| e.kappa == 0.7));
            assert!(error_norms(&c, &sp, 0) < 1e-13);
            assert!(error_norms(&c, &sp, 1) < 1e-13);
        }
    }

    #[test]
    fn single_element_respects_bounds() {
        let c = clothoid();
        assert!(matches!(approximate(&c, 1), Err(Error::Refine(_))));
        let sp = approximate_with(&c, 1, Closure::BestEffort).unwrap();
        let e = sp.elements[0];
        assert!(e.kappa >= 0.0 && e.kappa <= 1.0);
    }

    #[test]
    fn clothoid_convergence_orders() {
        let c = clothoid();
        let ns = [4, 8, 16, 32, 64];
        let mut e0 = vec![];
        let mut e1 = vec![];
        for &n in &ns {
            let sp = approximate(&c, n).unwrap();
            assert!((sp.length() - 1.0).abs() < 1e-10);
            for e in &sp.elements {
                assert!(e.kappa >= e.kappa_lo && e.kappa <= e.kappa_hi);
            }
            for j in &sp.joins {
                assert!(j.angle_gap < 1e-10 && j.position_gap < 1e-12);
            }
            assert!(sp.end_position_gap < 1e-12);
            e0.push(error_norms(&c, &sp, 0));
            e1.push(error_norms(&c, &sp, 1));
        }
        assert!(slope(&ns, &e0) >= 2.5, "{e0:?}");
        assert!(slope(&ns, &e1) >= 1.5, "{e1:?}");
        // n = 8 vs 16 ratios
        let r0 = e0[1] / e0[2];
        let r1 = e1[1] / e1[2];
        assert!(r0 > 8.0 / 1.5 && r0 < 8.0 * 1.5, "{r0}");
        assert!(r1 > 4.0 / 1.5 && r1 < 4.0 * 1.5, "{r1}");
    }

    #[test]
    fn curvature_error_is_first_order() {
        let c = clothoid();
        let a = error_norms(&c, &approximate(&c, 8).unwrap(), 2);
        let b = error_norms(&c, &approximate(&c, 16).unwrap(), 2);
        assert!(a / b > 1.5);
    }
}
