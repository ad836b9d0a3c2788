//! Transverse operator h = -d²/dt² + v(t) + V0·χ[a,∞)(t).
//!
//! Shooting runs from t = -a with the left decaying (or constant) solution and
//! counts nodes, so the ground energy is bracketed by an oscillation count
//! rather than by the sign of a matching function.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quad::GaussRule;

/// Default resonance tolerance in energy units with a = 1.
pub const TAU_RES: f64 = 1e-9;
/// Kinetic weakening used by the resonance probe.
pub const EPS_PROBE: f64 = 1e-3;
/// Base RK4 steps per halfwidth.
const STEPS_PER_A: f64 = 2000.0;
const OVERFLOW: f64 = 1e200;

/// Polynomial piece of v on [lo, hi], v(t) = Σ coeffs[k] t^k.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VPiece {
    pub lo: f64,
    pub hi: f64,
    pub coeffs: Vec<f64>,
}

impl VPiece {
    pub fn constant(lo: f64, hi: f64, value: f64) -> Self {
        VPiece { lo, hi, coeffs: vec![value] }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    fn antiderivative(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for (k, &c) in self.coeffs.iter().enumerate().rev() {
            acc = acc * t + c / (k as f64 + 1.0);
        }
        acc * t
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ProfilePotential {
    pub a: f64,
    pub pieces: Vec<VPiece>,
    pub v0: f64,
    pub symmetric: bool,
}

impl ProfilePotential {
    pub fn new(a: f64, mut pieces: Vec<VPiece>, v0: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::Validation(format!("halfwidth a must be positive, got {a}")));
        }
        if !(v0.is_finite() && v0 >= 0.0) {
            return Err(Error::Validation(format!("bias V0 must be nonnegative, got {v0}")));
        }
        pieces.sort_by(|p, q| p.lo.partial_cmp(&q.lo).unwrap_or(std::cmp::Ordering::Equal));
        let tol = 1e-12 * a;
        for (i, p) in pieces.iter().enumerate() {
            if !(p.lo.is_finite() && p.hi.is_finite()) || p.hi <= p.lo {
                return Err(Error::Validation(format!("piece {i} has an empty or invalid interval")));
            }
            if p.lo < -a - tol || p.hi > a + tol {
                return Err(Error::Validation(format!(
                    "piece {i} = [{}, {}] leaves the support [-a, a]",
                    p.lo, p.hi
                )));
            }
            if p.coeffs.is_empty() || p.coeffs.iter().any(|c| !c.is_finite()) {
                return Err(Error::Validation(format!(
                    "piece {i}: coefficients must be finite (v has to be square integrable)"
                )));
            }
            if i > 0 && p.lo < pieces[i - 1].hi - tol {
                return Err(Error::Validation(format!("pieces {} and {i} overlap", i - 1)));
            }
        }
        for p in pieces.iter_mut() {
            p.lo = p.lo.max(-a);
            p.hi = p.hi.min(a);
        }
        Ok(ProfilePotential { a, pieces, v0, symmetric: false })
    }

    /// Marks the profile as mirror symmetric; fails if it is not.
    pub fn with_symmetric(mut self, flag: bool) -> Result<Self> {
        if flag && !self.is_symmetric(1e-10) {
            return Err(Error::Validation("symmetric flag set but v(t) != v(-t)".into()));
        }
        self.symmetric = flag;
        Ok(self)
    }

    pub fn square_well(a: f64, depth: f64, v0: f64) -> Result<Self> {
        Self::new(a, vec![VPiece::constant(-a, a, -depth)], v0)
    }

    /// Piecewise constant profile: `values[i]` on [edges[i], edges[i+1]].
    pub fn steps(a: f64, edges: &[f64], values: &[f64], v0: f64) -> Result<Self> {
        if edges.len() != values.len() + 1 {
            return Err(Error::Validation("steps: need one more edge than values".into()));
        }
        let pieces = values
            .iter()
            .enumerate()
            .map(|(i, &v)| VPiece::constant(edges[i], edges[i + 1], v))
            .collect();
        Self::new(a, pieces, v0)
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        let mut out = self.clone();
        for p in out.pieces.iter_mut() {
            for c in p.coeffs.iter_mut() {
                *c *= lambda;
            }
        }
        out
    }

    /// Profile potential v(t); zero outside [-a, a].
    pub fn v(&self, t: f64) -> f64 {
        if t < -self.a || t > self.a {
            return 0.0;
        }
        let n = self.pieces.len();
        for (i, p) in self.pieces.iter().enumerate() {
            if t >= p.lo && (t < p.hi || (i + 1 == n && t <= p.hi)) {
                return p.eval(t);
            }
        }
        0.0
    }

    /// Full transverse potential including the bias.
    pub fn total(&self, t: f64) -> f64 {
        if t >= self.a {
            self.v(t) + self.v0
        } else {
            self.v(t)
        }
    }

    /// Exact ∫ of the full transverse potential over [lo, hi].
    pub fn integral(&self, lo: f64, hi: f64) -> f64 {
        let mut acc = 0.0;
        for p in &self.pieces {
            let l = lo.max(p.lo);
            let h = hi.min(p.hi);
            if h > l {
                acc += p.antiderivative(h) - p.antiderivative(l);
            }
        }
        if hi > self.a {
            acc += self.v0 * (hi - lo.max(self.a));
        }
        acc
    }

    /// Sorted breakpoints of v in [-a, a], both ends included.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b = vec![-self.a, self.a];
        for p in &self.pieces {
            b.push(p.lo);
            b.push(p.hi);
        }
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.dedup_by(|x, y| (*x - *y).abs() < 1e-13 * self.a);
        b
    }

    /// Sampled lower bound for v (including the zero gaps).
    pub fn min_sampled(&self) -> f64 {
        let mut m: f64 = 0.0;
        for p in &self.pieces {
            for k in 0..=256 {
                let t = p.lo + (p.hi - p.lo) * k as f64 / 256.0;
                m = m.min(p.eval(t));
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = self.v0;
        for p in &self.pieces {
            for k in 0..=256 {
                let t = p.lo + (p.hi - p.lo) * k as f64 / 256.0;
                m = m.max(p.eval(t).abs());
            }
        }
        m
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = 4001;
        let scale = self.max_abs().max(1.0);
        (0..n).all(|k| {
            // offset grid avoids sitting exactly on breakpoints
            let t = -self.a + 2.0 * self.a * (k as f64 + 0.5) / n as f64;
            (self.v(t) - self.v(-t)).abs() <= tol * scale
        })
    }

    pub fn is_identically_zero(&self) -> bool {
        self.pieces.iter().all(|p| p.coeffs.iter().all(|&c| c == 0.0))
    }
}

/// Result of one shooting pass.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Shot {
    pub phi: f64,
    pub dphi: f64,
    /// ln of the factor removed by overflow rescaling.
    pub log_scale: f64,
    /// Sign changes of φ on (-a, a).
    pub nodes: usize,
}

struct Trajectory {
    t: Vec<f64>,
    phi: Vec<f64>,
    dphi: Vec<f64>,
}

fn step_grid(profile: &ProfilePotential, refine: usize) -> Vec<f64> {
    let a = profile.a;
    let target = a / (STEPS_PER_A * refine as f64);
    let br = profile.breakpoints();
    let mut ts = vec![br[0]];
    for w in br.windows(2) {
        let n = ((w[1] - w[0]) / target).ceil().max(1.0) as usize;
        for k in 1..=n {
            ts.push(if k == n { w[1] } else { w[0] + (w[1] - w[0]) * k as f64 / n as f64 });
        }
    }
    ts
}

/// RK4 for y'' = (v(t) - E) y across the grid. Each step lies inside one piece,
/// so v is evaluated from that piece even at shared endpoints.
fn integrate(
    profile: &ProfilePotential,
    e: f64,
    left: (f64, f64),
    refine: usize,
    mut record: Option<&mut Trajectory>,
) -> Result<Shot> {
    let ts = step_grid(profile, refine);
    let (mut y, mut dy) = left;
    let mut log_scale = 0.0;
    let mut nodes = 0usize;
    if let Some(r) = record.as_deref_mut() {
        r.t.push(ts[0]);
        r.phi.push(y);
        r.dphi.push(dy);
    }
    for w in ts.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let h = t1 - t0;
        let mid = 0.5 * (t0 + t1);
        let piece = profile.pieces.iter().find(|p| mid >= p.lo && mid <= p.hi);
        let q = |t: f64| piece.map_or(0.0, |p| p.eval(t)) - e;
        let (q0, qm, q1) = (q(t0), q(mid), q(t1));
        let k1 = (dy, q0 * y);
        let k2 = (dy + 0.5 * h * k1.1, qm * (y + 0.5 * h * k1.0));
        let k3 = (dy + 0.5 * h * k2.1, qm * (y + 0.5 * h * k2.0));
        let k4 = (dy + h * k3.1, q1 * (y + h * k3.0));
        let ny = y + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        let ndy = dy + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        if (ny < 0.0 && y > 0.0) || (ny > 0.0 && y < 0.0) || (ny == 0.0 && y != 0.0) {
            nodes += 1;
        }
        y = ny;
        dy = ndy;
        if y.abs() > OVERFLOW || dy.abs() > OVERFLOW {
            let f = y.abs().max(dy.abs());
            y /= f;
            dy /= f;
            log_scale += f.ln();
            if record.is_some() {
                return Err(Error::Integration(
                    "solution overflowed while sampling the mode".into(),
                ));
            }
        }
        if !(y.is_finite() && dy.is_finite()) {
            return Err(Error::Integration(format!("non-finite solution at t = {t1}")));
        }
        if let Some(r) = record.as_deref_mut() {
            r.t.push(t1);
            r.phi.push(y);
            r.dphi.push(dy);
        }
    }
    Ok(Shot { phi: y, dphi: dy, log_scale, nodes })
}

/// Left boundary data at t = -a: φ = 1, φ' = √max(-E, 0).
fn left_data(e: f64) -> (f64, f64) {
    (1.0, (-e).max(0.0).sqrt())
}

/// Integrates from t = -a to t = a at energy E with the left decaying data.
pub fn shoot(profile: &ProfilePotential, e: f64) -> Result<Shot> {
    integrate(profile, e, left_data(e), 1, None)
}

/// Same as [`shoot`] with explicit left data and step refinement factor.
pub fn shoot_with(profile: &ProfilePotential, e: f64, left: (f64, f64), refine: usize) -> Result<Shot> {
    integrate(profile, e, left, refine.max(1), None)
}

/// ξ₊(E) = -√(V0 - E), the decay exponent on the right.
pub fn xi_plus_at(profile: &ProfilePotential, e: f64) -> f64 {
    -(profile.v0 - e).max(0.0).sqrt()
}

/// Number of eigenvalues of h strictly below E ≤ 0 (oscillation count).
pub fn count_below(profile: &ProfilePotential, e: f64, refine: usize) -> Result<usize> {
    let s = integrate(profile, e, left_data(e), refine, None)?;
    let k2 = profile.v0 - e;
    let tail_node = if k2 > 0.0 {
        let k = k2.sqrt();
        let grow = s.phi * k + s.dphi;
        s.phi != 0.0 && grow * s.phi < 0.0
    } else {
        s.phi * s.dphi < 0.0
    };
    Ok(s.nodes + usize::from(tail_node))
}

/// Ground eigenvalue of h, or None when h has no spectrum below zero.
pub fn ground_energy(profile: &ProfilePotential, refine: usize) -> Result<Option<f64>> {
    if count_below(profile, 0.0, refine)? == 0 {
        return Ok(None);
    }
    let mut lo = profile.min_sampled() - 1.0;
    let mut tries = 0;
    while count_below(profile, lo, refine)? > 0 {
        lo = 2.0 * lo - 1.0;
        tries += 1;
        if tries > 60 {
            return Err(Error::NoConvergence { msg: "no lower bracket for the ground energy".into(), lo, hi: 0.0 });
        }
    }
    let mut hi = 0.0;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Ok(Some(0.5 * (lo + hi)));
        }
        if count_below(profile, mid, refine)? >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Err(Error::NoConvergence { msg: "ground-energy bisection budget exhausted".into(), lo, hi })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ModeKind {
    GroundState,
    ZeroResonance,
    NoneBelowZero,
}

/// Threshold μ and the transverse mode φ0 with φ0(-a) = 1.
#[derive(Clone, Debug, Serialize)]
pub struct TransverseMode {
    pub mu: f64,
    pub kind: ModeKind,
    pub a: f64,
    pub v0: f64,
    pub phi_plus: f64,
    pub xi_plus: f64,
    pub xi_minus: f64,
    /// Computational interval is [-t_max, t_max].
    pub t_max: f64,
    /// |μ(h) - μ(h/2)| from the halved-step rerun.
    pub richardson_error: f64,
    /// φ0'(a) - ξ₊ φ0(a).
    pub matching_residual: f64,
    /// Dense finite-difference cross-check, when it was run.
    pub oracle_mu: Option<f64>,
    #[serde(skip)]
    nodes_t: Vec<f64>,
    #[serde(skip)]
    nodes_phi: Vec<f64>,
    #[serde(skip)]
    nodes_dphi: Vec<f64>,
}

impl TransverseMode {
    fn build(profile: &ProfilePotential, mu: f64, kind: ModeKind, richardson_error: f64) -> Result<Self> {
        let a = profile.a;
        let xi_minus = mu.abs().sqrt();
        let xi_plus = -(mu.abs() + profile.v0).sqrt();
        let mut tr = Trajectory { t: vec![], phi: vec![], dphi: vec![] };
        integrate(profile, mu, (1.0, xi_minus), 2, Some(&mut tr))?;
        let scale = tr.phi[0];
        for v in tr.phi.iter_mut().chain(tr.dphi.iter_mut()) {
            *v /= scale;
        }
        tr.phi[0] = 1.0;
        let phi_plus = *tr.phi.last().unwrap();
        let dphi_a = *tr.dphi.last().unwrap();
        let rate = xi_minus.max(profile.v0.sqrt()).max(1.0 / a);
        Ok(TransverseMode {
            mu,
            kind,
            a,
            v0: profile.v0,
            phi_plus,
            xi_plus,
            xi_minus,
            t_max: a + 12.0 / rate,
            richardson_error,
            matching_residual: dphi_a - xi_plus * phi_plus,
            oracle_mu: None,
            nodes_t: tr.t,
            nodes_phi: tr.phi,
            nodes_dphi: tr.dphi,
        })
    }

    fn locate(&self, t: f64) -> usize {
        let n = self.nodes_t.len();
        match self.nodes_t.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        }
    }

    /// φ0(t): closed-form tails outside [-a, a], cubic Hermite between RK4 nodes.
    pub fn phi(&self, t: f64) -> f64 {
        if t <= -self.a {
            return (self.xi_minus * (t + self.a)).exp();
        }
        if t >= self.a {
            return self.phi_plus * (self.xi_plus * (t - self.a)).exp();
        }
        let i = self.locate(t);
        let (t0, t1) = (self.nodes_t[i], self.nodes_t[i + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let (y0, y1) = (self.nodes_phi[i], self.nodes_phi[i + 1]);
        let (d0, d1) = (self.nodes_dphi[i] * h, self.nodes_dphi[i + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * d0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * d1
    }

    /// φ0'(t), derivative of the same interpolant.
    pub fn dphi(&self, t: f64) -> f64 {
        if t <= -self.a {
            return self.xi_minus * (self.xi_minus * (t + self.a)).exp();
        }
        if t >= self.a {
            return self.xi_plus * self.phi_plus * (self.xi_plus * (t - self.a)).exp();
        }
        let i = self.locate(t);
        let (t0, t1) = (self.nodes_t[i], self.nodes_t[i + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let (y0, y1) = (self.nodes_phi[i], self.nodes_phi[i + 1]);
        let (d0, d1) = (self.nodes_dphi[i] * h, self.nodes_dphi[i + 1] * h);
        let s2 = s * s;
        ((6.0 * s2 - 6.0 * s) * y0 + (3.0 * s2 - 4.0 * s + 1.0) * d0 + (-6.0 * s2 + 6.0 * s) * y1 + (3.0 * s2 - 2.0 * s) * d1) / h
    }

    /// Uniform samples of φ0 on [-t_max, t_max].
    pub fn samples(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        let n = n.max(2);
        let t: Vec<f64> = (0..n)
            .map(|k| -self.t_max + 2.0 * self.t_max * k as f64 / (n - 1) as f64)
            .collect();
        let p = t.iter().map(|&x| self.phi(x)).collect();
        (t, p)
    }

    /// RK4 node data on [-a, a].
    pub fn interior_nodes(&self) -> (&[f64], &[f64], &[f64]) {
        (&self.nodes_t, &self.nodes_phi, &self.nodes_dphi)
    }

    /// ‖φ0‖² over [-a, a].
    pub fn norm_sq_inner(&self) -> f64 {
        let g = GaussRule::new(6);
        let mut acc = 0.0;
        for w in self.nodes_t.windows(2) {
            acc += g.integrate(w[0], w[1], |t| self.phi(t).powi(2));
        }
        acc
    }

    /// Largest relative gap between the closed-form tails and a continued RK4
    /// integration over a ≤ |t| ≤ 2a.
    pub fn tail_consistency(&self, profile: &ProfilePotential) -> f64 {
        let a = self.a;
        let n = (STEPS_PER_A * 2.0) as usize;
        let h = a / n as f64;
        let mut worst: f64 = 0.0;
        // right: continue from the interior end point
        let q = profile.v0 - self.mu;
        let (mut y, mut dy) = (self.phi_plus, *self.nodes_dphi.last().unwrap());
        for k in 0..n {
            let (a1, b1) = (dy, q * y);
            let (a2, b2) = (dy + 0.5 * h * b1, q * (y + 0.5 * h * a1));
            let (a3, b3) = (dy + 0.5 * h * b2, q * (y + 0.5 * h * a2));
            let (a4, b4) = (dy + h * b3, q * (y + h * a3));
            y += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
            dy += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
            let t = a + h * (k + 1) as f64;
            let exact = self.phi(t);
            worst = worst.max((y - exact).abs() / exact.abs().max(1e-300));
        }
        // left: integrate backwards from -a
        let q = -self.mu;
        let (mut y, mut dy) = (1.0, self.xi_minus);
        let h = -h;
        for k in 0..n {
            let (a1, b1) = (dy, q * y);
            let (a2, b2) = (dy + 0.5 * h * b1, q * (y + 0.5 * h * a1));
            let (a3, b3) = (dy + 0.5 * h * b2, q * (y + 0.5 * h * a2));
            let (a4, b4) = (dy + h * b3, q * (y + h * a3));
            y += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
            dy += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
            let t = -a + h * (k + 1) as f64;
            let exact = self.phi(t);
            worst = worst.max((y - exact).abs() / exact.abs().max(1e-300));
        }
        worst
    }
}

/// Outcome of the resonance decision with the probe values that drove it.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ResonanceProbe {
    pub resonant: bool,
    /// Ground energy of h (0 if none below zero).
    pub e0: f64,
    /// Ground energy of the (1-ε)-weakened operator (0 if none).
    pub e_scaled: f64,
}

/// Ground energy of -(1-ε)d² + v + V0χ, via the equivalent rescaled potential.
fn scaled_ground(profile: &ProfilePotential, eps: f64) -> Result<Option<f64>> {
    let k = 1.0 / (1.0 - eps);
    let mut p = profile.scaled(k);
    p.v0 = profile.v0 * k;
    Ok(ground_energy(&p, 1)?.map(|e| e * (1.0 - eps)))
}

/// Full resonance decision; see [`detect_resonance`].
pub fn resonance_probe(profile: &ProfilePotential) -> Result<ResonanceProbe> {
    let tau = TAU_RES / (profile.a * profile.a);
    let e0 = ground_energy(profile, 1)?.unwrap_or(0.0);
    if e0 < -tau {
        return Ok(ResonanceProbe { resonant: false, e0, e_scaled: f64::NAN });
    }
    match scaled_ground(profile, EPS_PROBE)? {
        None => Ok(ResonanceProbe { resonant: false, e0, e_scaled: 0.0 }),
        Some(es) if es < -tau => Ok(ResonanceProbe { resonant: true, e0, e_scaled: es }),
        Some(es) => Err(Error::CriticalWindow { e0, e_scaled: es }),
    }
}

/// h ≥ 0 within tolerance while the (1-ε)-weakened operator binds.
pub fn detect_resonance(profile: &ProfilePotential) -> Result<bool> {
    Ok(resonance_probe(profile)?.resonant)
}

/// Spectral threshold μ = inf σ(h) and the associated transverse mode.
pub fn solve_threshold(profile: &ProfilePotential) -> Result<TransverseMode> {
    let tau = TAU_RES / (profile.a * profile.a);
    let coarse = ground_energy(profile, 1)?;
    match coarse {
        Some(e1) if e1 < -tau => {
            let e2 = ground_energy(profile, 2)?.unwrap_or(e1);
            let mut mode = TransverseMode::build(profile, e2, ModeKind::GroundState, (e1 - e2).abs())?;
            if e2.abs() > 1e-6 {
                let oracle = oracle::fd_ground_energy_auto(profile, profile.a / 400.0);
                if let Some(o) = oracle {
                    mode.oracle_mu = Some(o);
                    if (o - e2).abs() > 1e-4 * e2.abs() {
                        return Err(Error::Internal(format!(
                            "shooting μ = {e2} disagrees with the finite-difference oracle {o}"
                        )));
                    }
                }
            }
            Ok(mode)
        }
        _ => {
            let probe = resonance_probe(profile)?;
            let kind = if probe.resonant { ModeKind::ZeroResonance } else { ModeKind::NoneBelowZero };
            TransverseMode::build(profile, 0.0, kind, 0.0)
        }
    }
}

/// Coupling λ* (with the sign of `direction`) at which `shape.scaled(λ)` first
/// acquires a bound state; the subcritical end of the final bracket is returned.
pub fn critical_coupling(shape: &ProfilePotential, direction: f64, lam_max: f64) -> Result<f64> {
    let sgn = if direction < 0.0 { -1.0 } else { 1.0 };
    let binds = |lam: f64| -> Result<bool> { Ok(count_below(&shape.scaled(sgn * lam), 0.0, 1)? >= 1) };
    let mut lo = 0.0;
    let mut step = 1e-2 * lam_max.min(1.0);
    let mut hi = step;
    loop {
        if binds(hi)? {
            break;
        }
        lo = hi;
        step = (step * 1.25).min(0.05 * lam_max);
        hi += step;
        if hi > lam_max {
            return Err(Error::NoConvergence { msg: "no critical coupling below lam_max".into(), lo, hi });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if binds(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(sgn * lo)
}

/// Dense finite-difference diagonalization of h used as an independent check.
pub mod oracle {
    use super::ProfilePotential;

    /// Lowest Dirichlet eigenvalue on [-l, l] with step h and cell-averaged
    /// potential, by Sturm-sequence bisection; None if nothing lies below 0.
    pub fn fd_ground_energy(profile: &ProfilePotential, l: f64, h: f64) -> Option<f64> {
        let n = (2.0 * l / h).round() as usize - 1;
        let h = 2.0 * l / (n + 1) as f64;
        let inv = 1.0 / (h * h);
        let diag: Vec<f64> = (0..n)
            .map(|i| {
                let t = -l + h * (i + 1) as f64;
                2.0 * inv + profile.integral(t - 0.5 * h, t + 0.5 * h) / h
            })
            .collect();
        let off2 = inv * inv;
        let count = |x: f64| -> usize {
            let mut c = 0;
            let mut q = diag[0] - x;
            if q < 0.0 {
                c += 1;
            }
            for d in diag.iter().skip(1) {
                let qq = if q == 0.0 { 1e-300 } else { q };
                q = d - x - off2 / qq;
                if q < 0.0 {
                    c += 1;
                }
            }
            c
        };
        if count(0.0) == 0 {
            return None;
        }
        let mut lo = diag.iter().cloned().fold(f64::INFINITY, f64::min) - 2.0 * inv;
        let mut hi = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if count(mid) >= 1 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }

    /// Richardson combination of steps h and h/2 on [-l, l].
    pub fn fd_ground_energy_extrapolated(profile: &ProfilePotential, l: f64, h: f64) -> Option<f64> {
        let e1 = fd_ground_energy(profile, l, h)?;
        let e2 = fd_ground_energy(profile, l, 0.5 * h)?;
        Some((4.0 * e2 - e1) / 3.0)
    }

    /// Extrapolated oracle with the box grown until the tails are negligible.
    pub fn fd_ground_energy_auto(profile: &ProfilePotential, h: f64) -> Option<f64> {
        let mut l = 30.0 * profile.a;
        let mut e = fd_ground_energy_extrapolated(profile, l, h)?;
        for _ in 0..6 {
            let need = profile.a + 20.0 / e.abs().sqrt();
            if need <= l || need > 2e4 * profile.a {
                break;
            }
            l = need * 1.2;
            e = fd_ground_energy_extrapolated(profile, l, h)?;
        }
        Some(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn well() -> ProfilePotential {
        ProfilePotential::square_well(1.0, 1.0, 0.0).unwrap()
    }

    // transcendental condition for the even ground state of a square well:
    // k tan(k a) = κ, k = √(V1 - κ²)
    fn square_well_exact(depth: f64, a: f64) -> f64 {
        let f = |k: f64| k * (k * a).tan() - (depth - k * k).sqrt();
        let (mut lo, mut hi) = (1e-12, depth.sqrt().min(std::f64::consts::FRAC_PI_2 / a) * (1.0 - 1e-15));
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if f(m) < 0.0 {
                lo = m;
            } else {
                hi = m;
            }
        }
        let k = 0.5 * (lo + hi);
        k * k - depth
    }

    #[test]
    fn free_operator_has_nothing_below_zero() {
        let p = ProfilePotential::new(1.0, vec![], 0.0).unwrap();
        let m = solve_threshold(&p).unwrap();
        assert_eq!(m.kind, ModeKind::NoneBelowZero);
        assert_eq!(m.mu, 0.0);
        assert!(!detect_resonance(&p).unwrap());
        let s = shoot(&p, 0.0).unwrap();
        assert_eq!((s.phi, s.dphi), (1.0, 0.0));
    }

    #[test]
    fn shoot_square_well_zero_energy_is_cosine() {
        let s = shoot(&well(), 0.0).unwrap();
        assert!((s.phi - 2f64.cos()).abs() < 1e-12);
        assert!((s.dphi + 2f64.sin()).abs() < 1e-12);
    }

    #[test]
    fn square_well_matches_transcendental_root() {
        let m = solve_threshold(&well()).unwrap();
        assert_eq!(m.kind, ModeKind::GroundState);
        let exact = square_well_exact(1.0, 1.0);
        assert!((m.mu - exact).abs() < 1e-11, "{} vs {}", m.mu, exact);
        assert!((m.mu - (-0.45375316586024417)).abs() < 1e-11);
        assert!(!detect_resonance(&well()).unwrap());
    }

    #[test]
    fn square_well_oracle_value() {
        // frozen from the extrapolated finite-difference oracle on [-30, 30]
        let o = oracle::fd_ground_energy_extrapolated(&well(), 30.0, 1e-3).unwrap();
        assert!((o - (-0.45375316586024417)).abs() < 1e-8, "{o}");
    }

    #[test]
    fn normalization_and_tail_fields() {
        let p = ProfilePotential::steps(1.0, &[-1.0, 0.2, 1.0], &[-2.0, -0.5], 0.3).unwrap();
        let m = solve_threshold(&p).unwrap();
        assert_eq!(m.phi(-1.0), 1.0);
        assert_eq!(m.xi_minus.to_bits(), m.mu.abs().sqrt().to_bits());
        assert_eq!(m.xi_plus.to_bits(), (-(m.mu.abs() + 0.3).sqrt()).to_bits());
        assert!(m.tail_consistency(&p) < 1e-8, "{}", m.tail_consistency(&p));
        assert!(m.matching_residual.abs() < 1e-9);
    }

    #[test]
    fn asymmetric_critical_profile_is_resonant() {
        let shape = ProfilePotential::steps(1.0, &[-1.0, 0.0, 1.0], &[-1.0, 0.6], 0.0).unwrap();
        // ∫v < 0 for positive coupling, so binding starts at once there
        assert!(count_below(&shape.scaled(1e-3), 0.0, 1).unwrap() >= 1);
        let lam = critical_coupling(&shape, -1.0, 50.0).unwrap();
        assert!(lam < 0.0);
        let p = shape.scaled(lam);
        let m = solve_threshold(&p).unwrap();
        assert_eq!(m.kind, ModeKind::ZeroResonance);
        assert_eq!(m.mu, 0.0);
        assert!(detect_resonance(&p).unwrap());
        let s = shoot(&p, 0.0).unwrap();
        assert!((s.dphi - 0.0 * s.phi).abs() < 1e-8);
        // slightly subcritical is not resonant at the default tolerance
        assert!(!detect_resonance(&shape.scaled(lam * 0.9)).unwrap());
    }

    #[test]
    fn biased_resonance_decays_on_the_right() {
        let shape = ProfilePotential::steps(1.0, &[-1.0, 0.0, 1.0], &[-1.0, -0.5], 0.3).unwrap();
        let lam = critical_coupling(&shape, 1.0, 50.0).unwrap();
        let p = shape.scaled(lam);
        let m = solve_threshold(&p).unwrap();
        assert_eq!(m.kind, ModeKind::ZeroResonance);
        assert!(m.matching_residual.abs() < 1e-8);
        assert_eq!(m.phi(-5.0), 1.0);
        let r = m.phi(2.0) / m.phi(1.0);
        assert!((r - (-(0.3f64).sqrt()).exp()).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn deepening_never_raises_mu(d in 0.3f64..4.0, extra in 0.0f64..2.0, w in 0.1f64..0.9) {
            let shallow = ProfilePotential::square_well(1.0, d, 0.0).unwrap();
            let deep = ProfilePotential::steps(1.0, &[-1.0, -w, w, 1.0], &[-d, -d - extra, -d], 0.0).unwrap();
            let m1 = solve_threshold(&shallow).unwrap().mu;
            let m2 = solve_threshold(&deep).unwrap().mu;
            prop_assert!(m2 <= m1 + 1e-12);
        }

        #[test]
        fn shooting_agrees_with_oracle(d1 in 0.2f64..5.0, d2 in 0.2f64..5.0, c in -0.8f64..0.8) {
            let p = ProfilePotential::steps(1.0, &[-1.0, c, 1.0], &[-d1, -d2], 0.0).unwrap();
            let m = solve_threshold(&p).unwrap();
            let o = oracle::fd_ground_energy_auto(&p, 2e-3).unwrap();
            prop_assert!(((m.mu - o) / o).abs() < 1e-6, "{} vs {}", m.mu, o);
        }
    }
}
