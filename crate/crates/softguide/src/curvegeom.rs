//! Generating curve Γ given by its signed curvature, tube coordinates around it
//! and the calculus of the distance function d_x(s) = |x - Γ(s)|.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::GaussRule;

pub type Point = [f64; 2];

#[inline]
pub fn sub(p: Point, q: Point) -> Point {
    [p[0] - q[0], p[1] - q[1]]
}
#[inline]
pub fn add(p: Point, q: Point) -> Point {
    [p[0] + q[0], p[1] + q[1]]
}
#[inline]
pub fn scale(p: Point, f: f64) -> Point {
    [p[0] * f, p[1] * f]
}
#[inline]
pub fn dot(p: Point, q: Point) -> f64 {
    p[0] * q[0] + p[1] * q[1]
}
#[inline]
pub fn cross(p: Point, q: Point) -> f64 {
    p[0] * q[1] - p[1] * q[0]
}
#[inline]
pub fn norm(p: Point) -> f64 {
    p[0].hypot(p[1])
}
#[inline]
fn dir(theta: f64) -> Point {
    [theta.cos(), theta.sin()]
}
/// Left (inward) normal for heading θ.
#[inline]
fn left(theta: f64) -> Point {
    [-theta.sin(), theta.cos()]
}

/// One curvature piece in local arc length u ∈ [0, length].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum PieceSpec {
    Straight { length: f64 },
    Arc { length: f64, kappa: f64 },
    /// κ(u) = Σ coeffs[k] u^k.
    Poly { length: f64, coeffs: Vec<f64> },
}

impl PieceSpec {
    pub fn length(&self) -> f64 {
        match self {
            PieceSpec::Straight { length } | PieceSpec::Arc { length, .. } | PieceSpec::Poly { length, .. } => *length,
        }
    }

    pub fn kappa(&self, u: f64) -> f64 {
        match self {
            PieceSpec::Straight { .. } => 0.0,
            PieceSpec::Arc { kappa, .. } => *kappa,
            PieceSpec::Poly { coeffs, .. } => coeffs.iter().rev().fold(0.0, |acc, &c| acc * u + c),
        }
    }

    /// ∫_0^u κ.
    pub fn turn(&self, u: f64) -> f64 {
        match self {
            PieceSpec::Straight { .. } => 0.0,
            PieceSpec::Arc { kappa, .. } => kappa * u,
            PieceSpec::Poly { coeffs, .. } => {
                let mut acc = 0.0;
                for (k, &c) in coeffs.iter().enumerate().rev() {
                    acc = acc * u + c / (k as f64 + 1.0);
                }
                acc * u
            }
        }
    }

    fn dkappa(&self, u: f64) -> f64 {
        match self {
            PieceSpec::Poly { coeffs, .. } => {
                let mut acc = 0.0;
                for (k, &c) in coeffs.iter().enumerate().skip(1).rev() {
                    acc = acc * u + c * k as f64;
                }
                acc
            }
            _ => 0.0,
        }
    }

    fn is_flat(&self) -> bool {
        match self {
            PieceSpec::Straight { .. } => true,
            PieceSpec::Arc { kappa, .. } => *kappa == 0.0,
            PieceSpec::Poly { coeffs, .. } => coeffs.iter().all(|&c| c == 0.0),
        }
    }

    /// Sampled (min, max) of κ over the piece; exact for arcs, and for
    /// polynomials the extremes sit at the ends because κ is monotone.
    pub fn kappa_range(&self) -> (f64, f64) {
        let (k0, k1) = (self.kappa(0.0), self.kappa(self.length()));
        (k0.min(k1), k0.max(k1))
    }

    fn negated(&self) -> PieceSpec {
        match self {
            PieceSpec::Straight { length } => PieceSpec::Straight { length: *length },
            PieceSpec::Arc { length, kappa } => PieceSpec::Arc { length: *length, kappa: -kappa },
            PieceSpec::Poly { length, coeffs } => PieceSpec::Poly {
                length: *length,
                coeffs: coeffs.iter().map(|c| -c).collect(),
            },
        }
    }

    fn check(&self, idx: usize) -> Result<()> {
        let len = self.length();
        if !(len.is_finite() && len > 0.0) {
            return Err(Error::Validation(format!("piece {idx}: length must be positive, got {len}")));
        }
        match self {
            PieceSpec::Straight { .. } => Ok(()),
            PieceSpec::Arc { kappa, .. } => {
                if !kappa.is_finite() {
                    return Err(Error::Validation(format!("piece {idx}: curvature not finite")));
                }
                Ok(())
            }
            PieceSpec::Poly { coeffs, .. } => {
                if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(Error::Validation(format!("piece {idx}: bad polynomial coefficients")));
                }
                let n = 2000;
                let scale = (0..=n)
                    .map(|k| self.kappa(len * k as f64 / n as f64).abs())
                    .fold(0.0, f64::max)
                    .max(1e-300);
                let tol = 1e-12 * scale;
                let (mut pos, mut neg, mut up, mut down) = (false, false, false, false);
                for k in 0..=n {
                    let u = len * k as f64 / n as f64;
                    let kv = self.kappa(u);
                    pos |= kv > tol;
                    neg |= kv < -tol;
                    let d = self.dkappa(u);
                    up |= d * len > tol;
                    down |= d * len < -tol;
                }
                if pos && neg {
                    return Err(Error::Validation(format!("piece {idx}: curvature changes sign inside the piece")));
                }
                if up && down {
                    return Err(Error::Validation(format!("piece {idx}: curvature is not monotone on the piece")));
                }
                Ok(())
            }
        }
    }
}

/// A placed piece with calibrated arc length.
#[derive(Clone, Debug, Serialize)]
pub struct Piece {
    pub spec: PieceSpec,
    pub s_start: f64,
    pub s_end: f64,
    pub start: Point,
    pub theta_start: f64,
    /// Poly pieces: panel breaks in local u with positions there.
    #[serde(skip)]
    panels: Vec<(f64, Point)>,
}

impl Piece {
    fn theta_local(&self, u: f64) -> f64 {
        self.theta_start + self.spec.turn(u)
    }

    fn position_local(&self, u: f64, gauss: &GaussRule) -> Point {
        match &self.spec {
            PieceSpec::Straight { .. } => add(self.start, scale(dir(self.theta_start), u)),
            PieceSpec::Arc { kappa, .. } => {
                // chord of length 2 sin(κu/2)/κ in the mean direction
                let half = 0.5 * kappa * u;
                let chord = if half.abs() < 1e-8 { u * (1.0 - half * half / 6.0) } else { u * half.sin() / half };
                add(self.start, scale(dir(self.theta_start + half), chord))
            }
            PieceSpec::Poly { .. } => {
                let k = match self.panels.binary_search_by(|p| p.0.partial_cmp(&u).unwrap()) {
                    Ok(i) => return self.panels[i].1,
                    Err(i) => i.saturating_sub(1).min(self.panels.len() - 1),
                };
                let (u0, p0) = self.panels[k];
                let mut q = p0;
                for (x, w) in gauss.mapped(u0, u) {
                    let th = self.theta_local(x);
                    q[0] += w * th.cos();
                    q[1] += w * th.sin();
                }
                q
            }
        }
    }

    fn build_panels(&mut self, gauss: &GaussRule) {
        if let PieceSpec::Poly { .. } = self.spec {
            let len = self.spec.length();
            let kmax = {
                let (lo, hi) = self.spec.kappa_range();
                lo.abs().max(hi.abs())
            };
            let n = ((len * kmax.max(1.0) / 0.25).ceil() as usize).max(1);
            let mut panels = Vec::with_capacity(n + 1);
            let mut p = self.start;
            panels.push((0.0, p));
            for k in 0..n {
                let (u0, u1) = (len * k as f64 / n as f64, len * (k + 1) as f64 / n as f64);
                for (x, w) in gauss.mapped(u0, u1) {
                    let th = self.theta_local(x);
                    p[0] += w * th.cos();
                    p[1] += w * th.sin();
                }
                panels.push((u1, p));
            }
            self.panels = panels;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum AsymptoteKind {
    /// Line extensions of the two straight parts meet.
    Crossing,
    /// Both outgoing tangents equal (S-bend); the halflines point in opposite directions.
    ParallelCodirected,
    /// Outgoing tangents opposite (U-shape); both halflines point the same way.
    ParallelOpposite,
}

/// Asymptote data and the calibration of O and s = 0.
#[derive(Clone, Debug, Serialize)]
pub struct Asymptotes {
    pub kind: AsymptoteKind,
    /// Unit tangents of Γ on the straight parts s → -∞ and s → +∞.
    pub t_minus: Point,
    pub t_plus: Point,
    /// Outgoing halfline directions e₊ = T₊, e₋ = -T₋.
    pub e_plus: Point,
    pub e_minus: Point,
    pub origin: Point,
    /// Half-angle of the sector between the rays; τ = π - 2θ₀ for crossing rays.
    pub theta0: f64,
    /// ∫κ ds.
    pub tau: f64,
    /// On the straight parts dist-along-ray from O is |s| - c.
    pub c: f64,
    /// Signed distance between the two parallel arm lines (0 when crossing).
    pub lateral: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ConvexSide {
    PlusConvex,
    MinusConvex,
    Neither,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Side {
    Plus,
    Minus,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TubeCoordinates {
    pub s: f64,
    pub t: f64,
    pub jacobian: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum TubeLocation {
    Inside(TubeCoordinates),
    Outside(Side),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Region {
    Strip { s: f64, t: f64 },
    OmegaPlusOut,
    OmegaMinusOut,
}

/// Nearest point of Γ to a base point.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Nearest {
    pub s: f64,
    /// Signed offset (x - Γ(s))·n(s).
    pub t: f64,
    pub dist: f64,
}

/// Geometric element of Γ used by the distance calculus.
#[derive(Clone, Debug, Serialize)]
pub enum Element {
    /// s ≤ s_end, Γ(s) = p + (s - s_end) T.
    HalfMinus { s_end: f64, p: Point, t: Point },
    /// s ≥ s_start, Γ(s) = p + (s - s_start) T.
    HalfPlus { s_start: f64, p: Point, t: Point },
    Segment { s_start: f64, s_end: f64, p: Point, t: Point },
    Arc { s_start: f64, s_end: f64, center: Point, kappa: f64, theta_start: f64 },
    Poly { piece: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ExtremumKind {
    Min,
    Max,
}

/// Region of Fig. 4 type that a critical point certifies membership in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RegionLabel {
    /// Minimum on an arc, base point on the center side (ω₁).
    Concave,
    /// Minimum on an arc, base point on the far side (ω₂).
    Convex,
    /// Maximum on an arc (ω₃).
    Antipodal,
    /// Foot point on a straight element (semi-infinite strip variant).
    Strip,
    /// Critical point on a polynomial-curvature piece.
    Smooth,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Extremum {
    pub s: f64,
    pub value: f64,
    pub kind: ExtremumKind,
    pub host: usize,
    pub label: RegionLabel,
}

#[derive(Clone, Debug, Serialize)]
pub struct DistanceProfile {
    pub base: Point,
    /// Base point actually analysed (moved off a degenerate configuration).
    pub effective_base: Point,
    pub extrema: Vec<Extremum>,
    pub global_min: usize,
    pub degenerate: bool,
}

impl DistanceProfile {
    pub fn count(&self, kind: ExtremumKind) -> usize {
        self.extrema.iter().filter(|e| e.kind == kind).count()
    }

    pub fn pairing_holds(&self) -> bool {
        self.count(ExtremumKind::Max) + 1 == self.count(ExtremumKind::Min)
            && self.extrema.first().map(|e| e.kind) == Some(ExtremumKind::Min)
            && self.extrema.last().map(|e| e.kind) == Some(ExtremumKind::Min)
            && self.extrema.windows(2).all(|w| w[0].kind != w[1].kind)
    }

    /// Every non-global extremum is approached from the left (Ω₊) side.
    pub fn approached_from_plus(&self, curve: &PlanarCurve) -> bool {
        self.extrema.iter().enumerate().all(|(i, e)| {
            i == self.global_min || dot(sub(self.effective_base, curve.position(e.s)), curve.normal(e.s)) > 0.0
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Violation {
    pub condition: String,
    pub s: Option<f64>,
    pub point: Option<Point>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidityReport {
    pub a: f64,
    pub kappa_max: f64,
    /// 1 - a‖κ‖∞.
    pub local_margin: f64,
    pub local_ok: bool,
    pub global_ok: bool,
    /// |Γ(s₊) - Γ(s₋)| → ∞ along the two straight parts.
    pub separation_ok: bool,
    pub asymptotes: AsymptoteKind,
    /// Distance between the parallel arm lines minus 2a, when parallel.
    pub arm_clearance: Option<f64>,
    pub boundary_segments: usize,
    pub violations: Vec<Violation>,
}

impl ValidityReport {
    /// Strip is a diffeomorphic image of Γ × (-a, a).
    pub fn strip_ok(&self) -> bool {
        self.local_ok && self.global_ok
    }

    pub fn admissible(&self) -> bool {
        self.strip_ok() && self.separation_ok
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PlanarCurve {
    pieces: Vec<Piece>,
    s_min: f64,
    s_max: f64,
    start_point: Point,
    start_heading: f64,
    asym: Asymptotes,
    #[serde(skip)]
    elements: Vec<Element>,
    /// Bounding disc (center, radius) per element, infinite for halflines.
    #[serde(skip)]
    bounds: Vec<(Point, f64)>,
    #[serde(skip)]
    gauss: GaussRule,
}

impl PlanarCurve {
    /// Curve from curvature pieces, starting at the origin heading along +x.
    pub fn build(specs: &[PieceSpec]) -> Result<Self> {
        Self::build_with(specs, [0.0, 0.0], 0.0)
    }

    pub fn build_with(specs: &[PieceSpec], start: Point, heading: f64) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Validation("geometry needs at least one piece".into()));
        }
        for (i, p) in specs.iter().enumerate() {
            p.check(i)?;
        }
        if specs.iter().all(|p| p.is_flat()) {
            return Err(Error::Validation(
                "curvature vanishes identically; a straight line is excluded (use straight_line for the control)".into(),
            ));
        }
        Self::assemble(specs, start, heading)
    }

    /// Straight line through `start` with the given heading; the κ ≡ 0 control.
    pub fn straight_line(start: Point, heading: f64) -> Self {
        Self::assemble(&[PieceSpec::Straight { length: 1.0 }], start, heading).expect("straight line")
    }

    fn assemble(specs: &[PieceSpec], start: Point, heading: f64) -> Result<Self> {
        let gauss = GaussRule::new(20);
        let mut pieces = Vec::with_capacity(specs.len());
        let (mut s, mut p, mut th) = (0.0, start, heading);
        for spec in specs {
            let mut piece = Piece {
                spec: spec.clone(),
                s_start: s,
                s_end: s + spec.length(),
                start: p,
                theta_start: th,
                panels: vec![],
            };
            piece.build_panels(&gauss);
            let len = spec.length();
            p = piece.position_local(len, &gauss);
            th = piece.theta_local(len);
            s += len;
            pieces.push(piece);
        }
        let first = pieces.iter().position(|q| !q.spec.is_flat());
        let last = pieces.iter().rposition(|q| !q.spec.is_flat());
        let (s_min, s_max) = match (first, last) {
            (Some(i), Some(j)) => (pieces[i].s_start, pieces[j].s_end),
            _ => (0.0, 0.0),
        };
        let mut curve = PlanarCurve {
            pieces,
            s_min,
            s_max,
            start_point: start,
            start_heading: heading,
            asym: Asymptotes {
                kind: AsymptoteKind::Crossing,
                t_minus: [1.0, 0.0],
                t_plus: [1.0, 0.0],
                e_plus: [1.0, 0.0],
                e_minus: [-1.0, 0.0],
                origin: [0.0, 0.0],
                theta0: 0.0,
                tau: 0.0,
                c: 0.0,
                lateral: 0.0,
            },
            elements: vec![],
            bounds: vec![],
            gauss,
        };
        curve.calibrate();
        curve.build_elements();
        Ok(curve)
    }

    fn calibrate(&mut self) {
        let pm = self.position(self.s_min);
        let pp = self.position(self.s_max);
        let tm = self.tangent(self.s_min);
        let tp = self.tangent(self.s_max);
        let tau = self.turning_angle();
        let e_plus = tp;
        let e_minus = scale(tm, -1.0);
        let cr = cross(tm, tp);
        let (kind, origin, theta0, lateral) = if cr.abs() <= 1e-10 {
            let mid = scale(add(pm, pp), 0.5);
            let lat = cross(tm, sub(pp, pm));
            if dot(tm, tp) > 0.0 {
                (AsymptoteKind::ParallelCodirected, mid, 0.5 * PI, lat)
            } else {
                (AsymptoteKind::ParallelOpposite, mid, 0.0, lat)
            }
        } else {
            // pm + α T₋ = pp + β T₊
            let d = sub(pp, pm);
            let alpha = cross(d, tp) / cr;
            let o = add(pm, scale(tm, alpha));
            let beta = 0.5 * dot(e_plus, e_minus).clamp(-1.0, 1.0).acos();
            let b = add(e_plus, e_minus);
            let n_plus = [-tp[1], tp[0]];
            let th = if dot(n_plus, b) > 0.0 { beta } else { PI - beta };
            (AsymptoteKind::Crossing, o, th, 0.0)
        };
        let c_plus = self.s_max - dot(sub(pp, origin), tp);
        let c_minus = self.s_min + dot(sub(pm, origin), e_minus);
        let shift = 0.5 * (c_plus + c_minus);
        for p in self.pieces.iter_mut() {
            p.s_start -= shift;
            p.s_end -= shift;
        }
        self.s_min -= shift;
        self.s_max -= shift;
        self.asym = Asymptotes {
            kind,
            t_minus: tm,
            t_plus: tp,
            e_plus,
            e_minus,
            origin,
            theta0,
            tau,
            c: c_plus - shift,
            lateral,
        };
    }

    fn build_elements(&mut self) {
        let mut el = vec![Element::HalfMinus {
            s_end: self.s_min,
            p: self.position(self.s_min),
            t: self.asym.t_minus,
        }];
        let mut bounds = vec![([0.0, 0.0], f64::INFINITY)];
        for (i, pc) in self.pieces.iter().enumerate() {
            if pc.s_end <= self.s_min || pc.s_start >= self.s_max {
                continue;
            }
            let len = pc.spec.length();
            let mid = pc.position_local(0.5 * len, &self.gauss);
            // chord bound: every point lies within half the length of the midpoint
            bounds.push((mid, 0.5 * len * (1.0 + 1e-12) + 1e-12));
            el.push(match &pc.spec {
                PieceSpec::Straight { .. } => Element::Segment {
                    s_start: pc.s_start,
                    s_end: pc.s_end,
                    p: pc.start,
                    t: dir(pc.theta_start),
                },
                PieceSpec::Arc { kappa, .. } if *kappa == 0.0 => Element::Segment {
                    s_start: pc.s_start,
                    s_end: pc.s_end,
                    p: pc.start,
                    t: dir(pc.theta_start),
                },
                PieceSpec::Arc { kappa, .. } => Element::Arc {
                    s_start: pc.s_start,
                    s_end: pc.s_end,
                    center: add(pc.start, scale(left(pc.theta_start), 1.0 / kappa)),
                    kappa: *kappa,
                    theta_start: pc.theta_start,
                },
                PieceSpec::Poly { .. } => Element::Poly { piece: i },
            });
        }
        el.push(Element::HalfPlus {
            s_start: self.s_max,
            p: self.position(self.s_max),
            t: self.asym.t_plus,
        });
        bounds.push(([0.0, 0.0], f64::INFINITY));
        self.elements = el;
        self.bounds = bounds;
    }

    /// Same curve reflected across the x-axis (κ → -κ).
    pub fn mirrored(&self) -> Self {
        let specs: Vec<PieceSpec> = self.pieces.iter().map(|p| p.spec.negated()).collect();
        let start = [self.start_point[0], -self.start_point[1]];
        if self.is_straight() {
            return Self::straight_line(start, -self.start_heading);
        }
        Self::build_with(&specs, start, -self.start_heading).expect("mirror of a valid curve")
    }

    pub fn is_straight(&self) -> bool {
        self.pieces.iter().all(|p| p.spec.is_flat())
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn specs(&self) -> Vec<PieceSpec> {
        self.pieces.iter().map(|p| p.spec.clone()).collect()
    }

    pub fn start_point(&self) -> Point {
        self.start_point
    }

    pub fn start_heading(&self) -> f64 {
        self.start_heading
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    /// [s_min, s_max] outside which κ ≡ 0.
    pub fn curved_support(&self) -> (f64, f64) {
        (self.s_min, self.s_max)
    }

    pub fn asymptotes(&self) -> &Asymptotes {
        &self.asym
    }

    /// Start and end of the listed pieces in calibrated arc length.
    pub fn listed_range(&self) -> (f64, f64) {
        (self.pieces[0].s_start, self.pieces.last().unwrap().s_end)
    }

    fn piece_at(&self, s: f64) -> Option<&Piece> {
        let n = self.pieces.len();
        if s < self.pieces[0].s_start || s > self.pieces[n - 1].s_end {
            return None;
        }
        let i = self.pieces.partition_point(|p| p.s_end <= s).min(n - 1);
        Some(&self.pieces[i])
    }

    /// Signed curvature, right-continuous at piece joins.
    pub fn kappa(&self, s: f64) -> f64 {
        self.piece_at(s).map_or(0.0, |p| p.spec.kappa(s - p.s_start))
    }

    pub fn theta(&self, s: f64) -> f64 {
        let first = &self.pieces[0];
        let last = self.pieces.last().unwrap();
        if s <= first.s_start {
            return first.theta_start;
        }
        if s >= last.s_end {
            return last.theta_local(last.spec.length());
        }
        let p = self.piece_at(s).unwrap();
        p.theta_local(s - p.s_start)
    }

    pub fn tangent(&self, s: f64) -> Point {
        dir(self.theta(s))
    }

    pub fn normal(&self, s: f64) -> Point {
        left(self.theta(s))
    }

    pub fn position(&self, s: f64) -> Point {
        let first = &self.pieces[0];
        let last = self.pieces.last().unwrap();
        if s <= first.s_start {
            return add(first.start, scale(dir(first.theta_start), s - first.s_start));
        }
        if s >= last.s_end {
            let len = last.spec.length();
            let end = last.position_local(len, &self.gauss);
            return add(end, scale(dir(last.theta_local(len)), s - last.s_end));
        }
        let p = self.piece_at(s).unwrap();
        p.position_local(s - p.s_start, &self.gauss)
    }

    /// x(s, t) = Γ(s) + t n(s).
    pub fn tube_point(&self, s: f64, t: f64) -> Point {
        add(self.position(s), scale(self.normal(s), t))
    }

    /// ∫κ over [lo, hi], exact per piece.
    pub fn kappa_integral(&self, lo: f64, hi: f64) -> f64 {
        self.pieces
            .iter()
            .map(|p| {
                let l = lo.max(p.s_start);
                let h = hi.min(p.s_end);
                if h > l {
                    p.spec.turn(h - p.s_start) - p.spec.turn(l - p.s_start)
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// τ = ∫κ ds.
    pub fn turning_angle(&self) -> f64 {
        self.pieces.iter().map(|p| p.spec.turn(p.spec.length())).sum()
    }

    pub fn kappa_max(&self) -> f64 {
        self.pieces
            .iter()
            .map(|p| {
                let (lo, hi) = p.spec.kappa_range();
                lo.abs().max(hi.abs())
            })
            .fold(0.0, f64::max)
    }

    /// Sorted arc-length breakpoints of the curved support, including joins.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self
            .pieces
            .iter()
            .flat_map(|p| [p.s_start, p.s_end])
            .filter(|&s| s >= self.s_min - 1e-12 && s <= self.s_max + 1e-12)
            .collect();
        b.push(self.s_min);
        b.push(self.s_max);
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.dedup_by(|x, y| (*x - *y).abs() < 1e-13);
        b
    }

    pub fn convex_side(&self) -> ConvexSide {
        let (mut pos, mut neg) = (false, false);
        for p in &self.pieces {
            let (lo, hi) = p.spec.kappa_range();
            pos |= hi > 0.0;
            neg |= lo < 0.0;
        }
        match (pos, neg) {
            (true, false) => ConvexSide::PlusConvex,
            (false, true) => ConvexSide::MinusConvex,
            (false, false) => ConvexSide::PlusConvex,
            _ => ConvexSide::Neither,
        }
    }

    // critical points of d_x on one element: (s, kind, label)
    fn element_critical(&self, idx: usize, x: Point, out: &mut Vec<(f64, ExtremumKind, RegionLabel)>) {
        match &self.elements[idx] {
            Element::HalfMinus { s_end, p, t } => {
                let s = s_end + dot(sub(x, *p), *t);
                if s < *s_end {
                    out.push((s, ExtremumKind::Min, RegionLabel::Strip));
                }
            }
            Element::HalfPlus { s_start, p, t } => {
                let s = s_start + dot(sub(x, *p), *t);
                if s >= *s_start {
                    out.push((s, ExtremumKind::Min, RegionLabel::Strip));
                }
            }
            Element::Segment { s_start, s_end, p, t } => {
                let s = s_start + dot(sub(x, *p), *t);
                if s >= *s_start && s < *s_end {
                    out.push((s, ExtremumKind::Min, RegionLabel::Strip));
                }
            }
            Element::Arc { s_start, s_end, center, kappa, theta_start } => {
                let w = sub(x, *center);
                let r = norm(w);
                if r == 0.0 {
                    // the centre is equidistant from the whole arc
                    out.push((*s_start, ExtremumKind::Min, RegionLabel::Concave));
                    return;
                }
                let sg = kappa.signum();
                // Γ = C - n(θ)/κ; the nearest point has n(θ) = -sgn(κ) w/|w|
                let target = (-sg * w[1]).atan2(-sg * w[0]) - 0.5 * PI;
                let period = 2.0 * PI / kappa.abs();
                let len = s_end - s_start;
                let label_min = if r < 1.0 / kappa.abs() { RegionLabel::Concave } else { RegionLabel::Convex };
                for (shift, kind, label) in [
                    (0.0, ExtremumKind::Min, label_min),
                    (PI, ExtremumKind::Max, RegionLabel::Antipodal),
                ] {
                    let dth = (target + shift - theta_start) * sg;
                    let mut u = dth.rem_euclid(2.0 * PI) / kappa.abs();
                    while u < len {
                        out.push((s_start + u, kind, label));
                        u += period;
                    }
                }
            }
            Element::Poly { piece } => {
                let pc = &self.pieces[*piece];
                for (u, kind) in self.poly_critical(pc, x) {
                    out.push((pc.s_start + u, kind, RegionLabel::Smooth));
                }
            }
        }
    }

    fn poly_critical(&self, pc: &Piece, x: Point) -> Vec<(f64, ExtremumKind)> {
        let len = pc.spec.length();
        let (klo, khi) = pc.spec.kappa_range();
        let kmax = klo.abs().max(khi.abs());
        let n = ((len * kmax.max(1.0) * 16.0).ceil() as usize).clamp(16, 4096);
        // g(u) = -(x - P)·T, d/du of ½ d_x²
        let g = |u: f64| -> f64 {
            let p = pc.position_local(u, &self.gauss);
            -dot(sub(x, p), dir(pc.theta_local(u)))
        };
        let dg = |u: f64| -> f64 {
            let p = pc.position_local(u, &self.gauss);
            1.0 - pc.spec.kappa(u) * dot(sub(x, p), left(pc.theta_local(u)))
        };
        let mut out = vec![];
        let mut u0 = 0.0;
        let mut g0 = g(0.0);
        for k in 1..=n {
            let u1 = len * k as f64 / n as f64;
            let g1 = g(u1);
            let crosses = (g0 < 0.0 && g1 >= 0.0) || (g0 > 0.0 && g1 <= 0.0) || (g0 == 0.0 && k == 1);
            if crosses && !(g1 == 0.0 && k == n) {
                let (mut lo, mut hi) = (u0, u1);
                let rising = g1 > g0;
                let mut u = 0.5 * (lo + hi);
                for _ in 0..100 {
                    let gv = g(u);
                    if (gv < 0.0) == rising {
                        lo = u;
                    } else {
                        hi = u;
                    }
                    let d = dg(u);
                    let mut next = u - gv / d;
                    if !(next > lo && next < hi) || d == 0.0 {
                        next = 0.5 * (lo + hi);
                    }
                    if (next - u).abs() < 1e-15 * (1.0 + u.abs()) || hi - lo < 1e-15 {
                        u = next;
                        break;
                    }
                    u = next;
                }
                out.push((u, if rising { ExtremumKind::Min } else { ExtremumKind::Max }));
            }
            u0 = u1;
            g0 = g1;
        }
        out
    }

    fn critical_points(&self, x: Point) -> Vec<(f64, ExtremumKind, usize, RegionLabel)> {
        let mut all = vec![];
        let mut buf = vec![];
        for i in 0..self.elements.len() {
            buf.clear();
            self.element_critical(i, x, &mut buf);
            all.extend(buf.iter().map(|&(s, k, l)| (s, k, i, l)));
        }
        all.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
        all
    }

    /// Global nearest point of Γ to x.
    pub fn nearest(&self, x: Point) -> Nearest {
        self.nearest_with_runner_up(x).0
    }

    /// Nearest point and the best minimum on another element (if any).
    fn nearest_with_runner_up(&self, x: Point) -> (Nearest, Option<Nearest>) {
        let mut best: Option<(f64, f64, usize)> = None;
        let mut second: Option<(f64, f64, usize)> = None;
        let mut buf = vec![];
        for i in 0..self.elements.len() {
            let (c, r) = self.bounds[i];
            if r.is_finite() {
                if let Some((_, d, _)) = second.or(best) {
                    if norm(sub(x, c)) - r > d {
                        continue;
                    }
                }
            }
            buf.clear();
            self.element_critical(i, x, &mut buf);
            for &(s, kind, _) in &buf {
                if kind != ExtremumKind::Min {
                    continue;
                }
                let d = norm(sub(x, self.position(s)));
                match best {
                    Some((_, bd, _)) if d >= bd => {
                        if second.is_none_or(|(_, sd, _)| d < sd) {
                            second = Some((s, d, i));
                        }
                    }
                    _ => {
                        second = best;
                        best = Some((s, d, i));
                    }
                }
            }
        }
        let mk = |(s, _, _): (f64, f64, usize)| {
            let t = dot(sub(x, self.position(s)), self.normal(s));
            Nearest { s, t, dist: t.abs() }
        };
        // rounding can drop a foot that sits exactly on a join
        let b = best.unwrap_or_else(|| {
            self.breakpoints()
                .into_iter()
                .map(|s| (s, norm(sub(x, self.position(s))), 0))
                .min_by(|p, q| p.1.total_cmp(&q.1))
                .expect("a curve has at least one join")
        });
        (mk(b), second.map(mk))
    }

    pub fn distance(&self, x: Point) -> f64 {
        self.nearest(x).dist
    }

    /// Tube coordinates (s, t) inside Ω^a, or the outer side.
    pub fn tube_coordinates(&self, a: f64, x: Point) -> Result<TubeLocation> {
        let (n, other) = self.nearest_with_runner_up(x);
        if n.dist < a {
            if let Some(o) = other {
                if (o.dist - n.dist).abs() < 1e-10 * a && (o.s - n.s).abs() > 1e-6 * a {
                    return Err(Error::Geometry(format!(
                        "ambiguous nearest point for ({}, {}) inside the strip: s = {} and s = {}",
                        x[0], x[1], n.s, o.s
                    )));
                }
            }
            return Ok(TubeLocation::Inside(TubeCoordinates {
                s: n.s,
                t: n.t,
                jacobian: 1.0 - self.kappa(n.s) * n.t,
            }));
        }
        Ok(TubeLocation::Outside(if n.t > 0.0 { Side::Plus } else { Side::Minus }))
    }

    pub fn classify_region(&self, a: f64, x: Point) -> Result<Region> {
        Ok(match self.tube_coordinates(a, x)? {
            TubeLocation::Inside(c) => Region::Strip { s: c.s, t: c.t },
            TubeLocation::Outside(Side::Plus) => Region::OmegaPlusOut,
            TubeLocation::Outside(Side::Minus) => Region::OmegaMinusOut,
        })
    }

    // join points whose normal line passes through x, or x on Γ / at an arc center
    fn degeneracy(&self, x: Point) -> Option<Point> {
        let nn = self.nearest(x);
        let scale_len = 1.0 + norm(sub(x, self.position(nn.s)));
        if nn.dist < 1e-12 * scale_len {
            return Some(self.normal(nn.s));
        }
        for b in self.breakpoints() {
            let g = dot(sub(x, self.position(b)), self.tangent(b));
            if g.abs() < 1e-12 * (1.0 + norm(sub(x, self.position(b)))) {
                return Some(self.tangent(b));
            }
        }
        for e in &self.elements {
            if let Element::Arc { center, .. } = e {
                if norm(sub(x, *center)) < 1e-12 * scale_len {
                    return Some(self.normal(nn.s));
                }
            }
        }
        None
    }

    /// All local extrema of d_x, sorted by s.
    pub fn distance_profile(&self, x: Point, a: f64) -> DistanceProfile {
        let mut base = x;
        let mut degenerate = false;
        for _ in 0..4 {
            match self.degeneracy(base) {
                Some(d) => {
                    degenerate = true;
                    base = add(base, scale(d, 1e-9 * a));
                }
                None => break,
            }
        }
        let crit = self.critical_points(base);
        let extrema: Vec<Extremum> = crit
            .into_iter()
            .map(|(s, kind, host, label)| Extremum {
                s,
                value: norm(sub(base, self.position(s))),
                kind,
                host,
                label,
            })
            .collect();
        let global_min = extrema
            .iter()
            .enumerate()
            .filter(|(_, e)| e.kind == ExtremumKind::Min)
            .min_by(|p, q| p.1.value.partial_cmp(&q.1.value).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        DistanceProfile { base: x, effective_base: base, extrema, global_min, degenerate }
    }

    /// Checks the local condition a‖κ‖∞ < 1 and global injectivity of the tube map.
    pub fn validate_strip(&self, a: f64) -> Result<ValidityReport> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::Validation(format!("halfwidth must be positive, got {a}")));
        }
        let kmax = self.kappa_max();
        let local_margin = 1.0 - a * kmax;
        let mut violations = vec![];
        let local_ok = local_margin > 0.0;
        if !local_ok {
            let s = self
                .pieces
                .iter()
                .find(|p| {
                    let (lo, hi) = p.spec.kappa_range();
                    a * lo.abs().max(hi.abs()) >= 1.0
                })
                .map(|p| p.s_start);
            violations.push(Violation {
                condition: format!("local injectivity a*max|kappa| = {} >= 1", a * kmax),
                s,
                point: s.map(|s| self.position(s)),
            });
        }
        let asym = self.asym.clone();
        let separation_ok = asym.kind != AsymptoteKind::ParallelOpposite;
        if !separation_ok {
            violations.push(Violation {
                condition: "both straight parts point the same way, so |Gamma(s+) - Gamma(s-)| stays bounded".into(),
                s: None,
                point: Some(asym.origin),
            });
        }
        let mut arm_clearance = None;
        let mut global_ok = true;
        if asym.kind == AsymptoteKind::ParallelOpposite {
            let gap = asym.lateral.abs() - 2.0 * a;
            arm_clearance = Some(gap);
            if gap <= 0.0 {
                global_ok = false;
                violations.push(Violation {
                    condition: format!("parallel arms {} apart, closer than 2a", asym.lateral.abs()),
                    s: Some(self.s_max),
                    point: Some(self.position(self.s_max)),
                });
            }
        } else if asym.kind == AsymptoteKind::ParallelCodirected {
            arm_clearance = Some(asym.lateral.abs() - 2.0 * a);
        }
        let boundary_segments;
        if local_ok {
            let (n, hit) = self.boundary_crossing(a);
            boundary_segments = n;
            if let Some((s, p)) = hit {
                global_ok = false;
                violations.push(Violation {
                    condition: "strip boundary intersects itself".into(),
                    s: Some(s),
                    point: Some(p),
                });
            }
        } else {
            boundary_segments = 0;
        }
        Ok(ValidityReport {
            a,
            kappa_max: kmax,
            local_margin,
            local_ok,
            global_ok,
            separation_ok,
            asymptotes: asym.kind,
            arm_clearance,
            boundary_segments,
            violations,
        })
    }

    fn boundary_crossing(&self, a: f64) -> (usize, Option<(f64, Point)>) {
        let kmax = self.kappa_max();
        let step = if kmax > 0.0 { a.min(1.0 / kmax) } else { a } / 50.0;
        let beta = 0.5 * dot(self.asym.e_plus, self.asym.e_minus).clamp(-1.0, 1.0).acos();
        let reach = self.s_max.abs().max(self.s_min.abs()) + self.asym.c.abs();
        let window = reach
            + 2.0 * a
            + if self.asym.kind == AsymptoteKind::Crossing { 4.0 * a / beta.sin().max(1e-3) } else { 4.0 * a };
        let window = window.min(reach + 2.0e4 * a);
        let (lo, hi) = (self.s_min.min(-window), self.s_max.max(window));
        let n = ((hi - lo) / step).ceil() as usize;
        let n = n.min(2_000_000);
        let mut pts: Vec<(Point, f64, usize)> = Vec::with_capacity(2 * (n + 1));
        for (edge, t) in [a, -a].into_iter().enumerate() {
            for k in 0..=n {
                let s = lo + (hi - lo) * k as f64 / n as f64;
                pts.push((self.tube_point(s, t), s, edge));
            }
        }
        // segment i joins pts[i] -> pts[i+1] within one edge
        let segs: Vec<usize> = (0..pts.len() - 1).filter(|&i| pts[i].2 == pts[i + 1].2).collect();
        let cell = 4.0 * step;
        let mut grid: std::collections::HashMap<(i64, i64), Vec<usize>> = std::collections::HashMap::new();
        let key = |p: Point| ((p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64);
        for (j, &i) in segs.iter().enumerate() {
            let (k0, k1) = (key(pts[i].0), key(pts[i + 1].0));
            for gx in k0.0.min(k1.0)..=k0.0.max(k1.0) {
                for gy in k0.1.min(k1.1)..=k0.1.max(k1.1) {
                    grid.entry((gx, gy)).or_default().push(j);
                }
            }
        }
        let mut keys: Vec<_> = grid.keys().copied().collect();
        keys.sort();
        for kk in keys {
            let list = &grid[&kk];
            for (ia, &ja) in list.iter().enumerate() {
                for &jb in &list[ia + 1..] {
                    let (i, j) = (segs[ja], segs[jb]);
                    if pts[i].2 == pts[j].2 && i.abs_diff(j) <= 1 {
                        continue;
                    }
                    if segments_intersect(pts[i].0, pts[i + 1].0, pts[j].0, pts[j + 1].0) {
                        return (segs.len(), Some((pts[i].1, pts[i].0)));
                    }
                }
            }
        }
        (segs.len(), None)
    }
}

fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = cross(sub(p2, p1), sub(q1, p1));
    let d2 = cross(sub(p2, p1), sub(q2, p1));
    let d3 = cross(sub(q2, q1), sub(p1, q1));
    let d4 = cross(sub(q2, q1), sub(p2, q1));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |a: Point, b: Point, c: Point, d: f64| {
        d == 0.0 && c[0] >= a[0].min(b[0]) && c[0] <= a[0].max(b[0]) && c[1] >= a[1].min(b[1]) && c[1] <= a[1].max(b[1])
    };
    on(p1, p2, q1, d1) || on(p1, p2, q2, d2) || on(q1, q2, p1, d3) || on(q1, q2, p2, d4)
}

/// Arc bend of curvature κ turning by τ with straight arms on both sides.
pub fn arc_bend(kappa: f64, tau: f64) -> Result<PlanarCurve> {
    PlanarCurve::build(&[PieceSpec::Arc { length: (tau / kappa).abs(), kappa: kappa.abs() * tau.signum() }])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s_bend() -> PlanarCurve {
        PlanarCurve::build(&[
            PieceSpec::Arc { length: 1.0, kappa: 1.0 },
            PieceSpec::Arc { length: 1.0, kappa: -1.0 },
        ])
        .unwrap()
    }

    fn u_shape(k: f64) -> PlanarCurve {
        PlanarCurve::build(&[PieceSpec::Arc { length: PI, kappa: k }]).unwrap()
    }

    // dense s-grid local extrema of d_x with parabolic refinement
    fn brute_extrema(c: &PlanarCurve, x: Point, lo: f64, hi: f64, h: f64) -> Vec<(f64, ExtremumKind)> {
        let n = ((hi - lo) / h) as usize;
        let d: Vec<f64> = (0..=n).map(|k| norm(sub(x, c.position(lo + h * k as f64)))).collect();
        let mut out = vec![];
        for k in 1..n {
            let (a, b, e) = (d[k - 1], d[k], d[k + 1]);
            let kind = if b < a && b <= e {
                ExtremumKind::Min
            } else if b > a && b >= e {
                ExtremumKind::Max
            } else {
                continue;
            };
            let mut s = lo + h * k as f64;
            let den = a - 2.0 * b + e;
            if den != 0.0 {
                s += 0.5 * h * (a - e) / den;
            }
            // golden refinement on the bracket
            let f = |s: f64| {
                let v = norm(sub(x, c.position(s)));
                if kind == ExtremumKind::Min {
                    v
                } else {
                    -v
                }
            };
            let (mut l, mut r) = (s - h, s + h);
            let g = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..80 {
                let m1 = r - g * (r - l);
                let m2 = l + g * (r - l);
                if f(m1) < f(m2) {
                    r = m2;
                } else {
                    l = m1;
                }
            }
            out.push((0.5 * (l + r), kind));
        }
        out
    }

    #[test]
    fn straight_line_is_rejected() {
        assert!(PlanarCurve::build(&[PieceSpec::Straight { length: 3.0 }]).is_err());
        assert!(PlanarCurve::build(&[PieceSpec::Arc { length: 3.0, kappa: 0.0 }]).is_err());
        let l = PlanarCurve::straight_line([0.0, 0.0], 0.3);
        assert!(l.is_straight());
        assert_eq!(l.turning_angle(), 0.0);
    }

    #[test]
    fn nearest_at_arc_centre() {
        let c = PlanarCurve::build(&[PieceSpec::Arc { length: PI, kappa: 0.5 }]).unwrap();
        let centre = add(c.position(0.0), scale(c.normal(0.0), 2.0));
        let n = c.nearest(centre);
        assert!((n.dist - 2.0).abs() < 1e-12, "{n:?}");
    }

    #[test]
    fn arc_bend_asymptotes() {
        let c = PlanarCurve::build(&[PieceSpec::Arc { length: PI / 3.0, kappa: 1.0 }]).unwrap();
        let a = c.asymptotes();
        assert_eq!(a.kind, AsymptoteKind::Crossing);
        assert!((c.turning_angle() - PI / 3.0).abs() < 1e-12);
        assert!((a.theta0 - PI / 3.0).abs() < 1e-12);
        // calibration: ±s have equal distance from O on the arms
        for s in [5.0, 17.0] {
            let dp = norm(sub(c.position(s), a.origin));
            let dm = norm(sub(c.position(-s), a.origin));
            assert!((dp - dm).abs() < 1e-12);
            assert!((dp - (s - a.c)).abs() < 1e-12);
        }
    }

    #[test]
    fn s_bend_and_u_shape() {
        let s = s_bend();
        assert_eq!(s.turning_angle(), 0.0);
        assert_eq!(s.asymptotes().kind, AsymptoteKind::ParallelCodirected);
        assert_eq!(s.convex_side(), ConvexSide::Neither);
        assert!(s.validate_strip(0.5).unwrap().separation_ok);

        let u = u_shape(1.0);
        assert!((u.turning_angle() - PI).abs() < 1e-14);
        let a = u.asymptotes();
        assert_eq!(a.kind, AsymptoteKind::ParallelOpposite);
        let mid = scale(add(u.position(u.curved_support().0), u.position(u.curved_support().1)), 0.5);
        assert!(norm(sub(a.origin, mid)) < 1e-14);
        assert_eq!(u_shape(-1.0).convex_side(), ConvexSide::MinusConvex);
        let r = u.validate_strip(0.5).unwrap();
        assert!(r.strip_ok());
        assert!(!r.separation_ok);
        assert!(!r.admissible());
    }

    #[test]
    fn unit_speed_and_closed_forms() {
        let c = PlanarCurve::build(&[
            PieceSpec::Straight { length: 0.5 },
            PieceSpec::Poly { length: 1.0, coeffs: vec![0.0, 1.0] },
            PieceSpec::Arc { length: 0.7, kappa: 1.0 },
            PieceSpec::Poly { length: 1.0, coeffs: vec![1.0, -0.8] },
        ])
        .unwrap();
        let h = 1e-3;
        let (lo, hi) = c.listed_range();
        let mut worst: f64 = 0.0;
        for k in 0..=400 {
            let s = lo - 1.0 + (hi - lo + 2.0) * k as f64 / 400.0;
            // the difference stencil must not straddle a curvature jump
            if c.pieces().iter().any(|p| (p.s_start - s).abs() < 3.0 * h || (p.s_end - s).abs() < 3.0 * h) {
                continue;
            }
            let p = |d: f64| c.position(s + d);
            let d = sub(
                scale(sub(p(h), p(-h)), 8.0 / (12.0 * h)),
                scale(sub(p(2.0 * h), p(-2.0 * h)), 1.0 / (12.0 * h)),
            );
            worst = worst.max((norm(d) - 1.0).abs());
            assert!((dot(d, c.tangent(s)) - 1.0).abs() < 1e-10);
        }
        assert!(worst < 1e-10, "{worst}");
        // the clothoid piece turns by 1/2
        assert!((c.turning_angle() - (0.5 + 0.7 + 0.6)).abs() < 1e-14);
    }

    #[test]
    fn strip_validity_examples() {
        let c = PlanarCurve::build(&[PieceSpec::Arc { length: 1.0, kappa: 1.0 }]).unwrap();
        let r = c.validate_strip(0.5).unwrap();
        assert!((r.local_margin - 0.5).abs() < 1e-15);
        assert!(r.admissible());
        let r = c.validate_strip(1.2).unwrap();
        assert!(!r.local_ok);
        assert!(!r.violations.is_empty());
    }

    #[test]
    fn keyhole_hairpin_overlaps() {
        // right turn, long left turn, right turn: total π with a narrow neck
        let al = 1.0;
        let c = PlanarCurve::build(&[
            PieceSpec::Arc { length: al, kappa: -1.0 },
            PieceSpec::Arc { length: PI + 2.0 * al, kappa: 1.0 },
            PieceSpec::Arc { length: al, kappa: -1.0 },
        ])
        .unwrap();
        let gap = c.asymptotes().lateral.abs();
        let a = 0.6;
        assert!(gap < 2.0 * a && a < 1.0, "gap {gap}");
        let r = c.validate_strip(a).unwrap();
        assert!(r.local_ok && !r.global_ok);
        // dense oracle: some strip point has a nearest point other than its own s
        let mut found = false;
        for i in 0..400 {
            for &t in &[0.99 * a, -0.99 * a, 0.5 * a, -0.5 * a] {
                let s = c.curved_support().0 - 3.0 + i as f64 * 0.05;
                let x = c.tube_point(s, t);
                if (c.nearest(x).s - s).abs() > 1e-6 {
                    found = true;
                }
            }
        }
        assert!(found);
        // a wide hairpin is fine
        let w = PlanarCurve::build(&[
            PieceSpec::Arc { length: 0.2, kappa: -1.0 },
            PieceSpec::Arc { length: PI + 0.4, kappa: 1.0 },
            PieceSpec::Arc { length: 0.2, kappa: -1.0 },
        ])
        .unwrap();
        assert!(w.validate_strip(0.4).unwrap().strip_ok());
    }

    #[test]
    fn tube_coordinates_examples() {
        let c = PlanarCurve::build(&[PieceSpec::Arc { length: 2.0, kappa: 1.0 }]).unwrap();
        let a = 0.6;
        let sb = c.curved_support().0 + 0.7;
        match c.tube_coordinates(a, c.position(sb)).unwrap() {
            TubeLocation::Inside(tc) => {
                assert!((tc.s - sb).abs() < 1e-12 && tc.t.abs() < 1e-12 && (tc.jacobian - 1.0).abs() < 1e-12)
            }
            _ => panic!(),
        }
        match c.tube_coordinates(a, c.tube_point(sb, a / 2.0)).unwrap() {
            TubeLocation::Inside(tc) => {
                assert!((tc.s - sb).abs() < 1e-12);
                assert!((tc.t - a / 2.0).abs() < 1e-12);
                assert!((tc.jacobian - (1.0 - a / 2.0)).abs() < 1e-12);
            }
            _ => panic!(),
        }
        assert_eq!(c.classify_region(a, c.tube_point(sb, 2.0 * a)).unwrap(), Region::OmegaPlusOut);
        assert_eq!(c.classify_region(a, c.tube_point(sb, -2.0 * a)).unwrap(), Region::OmegaMinusOut);
    }

    #[test]
    fn u_shape_antipodal_maximum() {
        let u = u_shape(1.0);
        let a = u.elements().iter().find_map(|e| match e {
            Element::Arc { center, .. } => Some(*center),
            _ => None,
        });
        let center = a.unwrap();
        // point on the opening side of the center
        let x = add(center, [-0.3, 0.1]);
        let dp = u.distance_profile(x, 0.5);
        let maxima: Vec<_> = dp.extrema.iter().filter(|e| e.kind == ExtremumKind::Max).collect();
        assert_eq!(maxima.len(), 1);
        assert_eq!(maxima[0].label, RegionLabel::Antipodal);
        assert!((maxima[0].value - (1.0 + norm(sub(x, center)))).abs() < 1e-12);
        assert!(dp.pairing_holds());
        let brute = brute_extrema(&u, x, -20.0, 20.0, 1e-3);
        assert_eq!(brute.len(), dp.extrema.len());
    }

    #[test]
    fn concave_point_single_minimum() {
        let c = PlanarCurve::build(&[PieceSpec::Arc { length: 1.0, kappa: 1.0 }]).unwrap();
        let sm = 0.5 * (c.curved_support().0 + c.curved_support().1);
        let x = c.tube_point(sm, 0.4);
        let dp = c.distance_profile(x, 0.5);
        assert_eq!(dp.extrema.len(), 1);
        assert_eq!(dp.extrema[0].label, RegionLabel::Concave);
        assert!((dp.extrema[0].value - 0.4).abs() < 1e-12);
    }

    #[test]
    fn degenerate_points_are_flagged() {
        let c = PlanarCurve::build(&[PieceSpec::Arc { length: 1.0, kappa: 1.0 }]).unwrap();
        let (s0, _) = c.curved_support();
        let on = c.position(s0 + 0.3);
        assert!(c.distance_profile(on, 0.5).degenerate);
        let join_normal = c.tube_point(s0, -2.0);
        let dp = c.distance_profile(join_normal, 0.5);
        assert!(dp.degenerate);
        assert!(dp.pairing_holds());
    }

    #[test]
    fn mirror_flips_orientation() {
        let c = PlanarCurve::build(&[PieceSpec::Arc { length: 1.0, kappa: 0.8 }]).unwrap();
        let m = c.mirrored();
        assert!((m.turning_angle() + c.turning_angle()).abs() < 1e-15);
        assert_eq!(m.convex_side(), ConvexSide::MinusConvex);
        assert!((m.asymptotes().theta0 - (PI - c.asymptotes().theta0)).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn turning_identity(k in 0.05f64..2.0, tau in 0.05f64..3.0, sgn in prop::bool::ANY) {
            let tau = if sgn { tau } else { -tau };
            let c = PlanarCurve::build(&[
                PieceSpec::Straight { length: 0.3 },
                PieceSpec::Arc { length: 0.5 * tau.abs() / k, kappa: k * tau.signum() },
                PieceSpec::Poly { length: 0.5 * tau.abs() / k, coeffs: vec![k * tau.signum(), 0.0] },
            ]).unwrap();
            prop_assert!((c.turning_angle() - tau).abs() < 1e-12);
            prop_assert!((tau - (PI - 2.0 * c.asymptotes().theta0)).abs() < 1e-8);
        }

        #[test]
        fn nearest_matches_dense_grid(u in -4.0f64..4.0, v in -4.0f64..4.0) {
            let c = PlanarCurve::build(&[
                PieceSpec::Arc { length: 1.0, kappa: 0.5 },
                PieceSpec::Straight { length: 0.4 },
                PieceSpec::Poly { length: 1.5, coeffs: vec![0.3, 0.4] },
            ]).unwrap();
            let x = [u, v];
            let n = c.nearest(x);
            let (lo, hi) = (-30.0, 30.0);
            let m = 60000;
            let (mut bs, mut bd) = (0.0, f64::INFINITY);
            for k in 0..=m {
                let s = lo + (hi - lo) * k as f64 / m as f64;
                let d = norm(sub(x, c.position(s)));
                if d < bd { bd = d; bs = s; }
            }
            // refine the grid optimum
            let (mut l, mut r) = (bs - 1e-3, bs + 1e-3);
            for _ in 0..80 {
                let m1 = r - 0.618 * (r - l);
                let m2 = l + 0.618 * (r - l);
                if norm(sub(x, c.position(m1))) < norm(sub(x, c.position(m2))) { r = m2 } else { l = m1 }
            }
            let sb = 0.5 * (l + r);
            prop_assume!(n.dist > 1e-3);
            prop_assert!((n.s - sb).abs() < 1e-6 || (n.dist - norm(sub(x, c.position(sb)))).abs() < 1e-12,
                "{} vs {}", n.s, sb);
        }

        #[test]
        fn jacobian_positive_in_strip(s in -10.0f64..10.0, t in -0.99f64..0.99) {
            let c = PlanarCurve::build(&[
                PieceSpec::Arc { length: 1.2, kappa: 1.1 },
                PieceSpec::Arc { length: 0.6, kappa: -0.9 },
            ]).unwrap();
            let a = 0.8;
            prop_assert!(c.validate_strip(a).unwrap().strip_ok());
            let x = c.tube_point(s, t * a);
            match c.tube_coordinates(a, x).unwrap() {
                TubeLocation::Inside(tc) => {
                    prop_assert!(tc.jacobian > 0.0);
                    prop_assert!((tc.s - s).abs() < 1e-9);
                }
                TubeLocation::Outside(_) => prop_assert!(false),
            }
        }

        #[test]
        fn profile_matches_brute_force(u in -6.0f64..6.0, v in -6.0f64..6.0) {
            let c = PlanarCurve::build(&[
                PieceSpec::Arc { length: 1.5, kappa: 0.8 },
                PieceSpec::Straight { length: 0.5 },
                PieceSpec::Arc { length: 2.0, kappa: 0.6 },
            ]).unwrap();
            let x = [u, v];
            let dp = c.distance_profile(x, 0.5);
            prop_assert!(dp.pairing_holds());
            let brute = brute_extrema(&c, x, -40.0, 40.0, 2e-3);
            prop_assert_eq!(brute.len(), dp.extrema.len());
            for (b, e) in brute.iter().zip(dp.extrema.iter()) {
                prop_assert_eq!(b.1, e.kind);
                prop_assert!((b.0 - e.s).abs() < 1e-6, "{} vs {}", b.0, e.s);
            }
            if c.convex_side() == ConvexSide::PlusConvex && c.nearest(x).t < -0.5 {
                prop_assert!(dp.approached_from_plus(&c));
            }
        }
    }
}
