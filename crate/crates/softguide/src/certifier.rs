//! Variational existence certificates: the trial function φ0(t)χ_in(s) + νg
//! inside the strip, decaying or flat continuations outside, and the shifted
//! form Q[ψ] - μ‖ψ‖² evaluated by quadrature with a mesh-doubling error bound.
//!
//! Outside the strip a decaying side carries ψ = φ± e^{-|ξ±|(d - a)} χ_in(|σ|)
//! where d and σ are the distance to Γ and the arc length of the nearest point.
//! Each exterior point is reached along exactly one normal segment
//! {Γ(σ) ± t n(σ) : a < t < t_cut(σ)}, so the side integrals reduce to closed
//! forms in t and a one-dimensional quadrature in σ.  A flat side (ξ = 0) uses
//! the radial mollifier χ_in(√(ρ² - a²) - d0 + s0) around O.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::curvegeom::{dot, norm, sub, AsymptoteKind, ConvexSide, PlanarCurve};
use crate::error::{Error, Result};
use crate::profile1d::{solve_threshold, ModeKind, ProfilePotential, TransverseMode};
use crate::quad::{clip_breaks, GaussRule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CaseTag {
    /// Zero-energy resonance, no bias.
    T1a,
    /// Zero-energy resonance with bias, Ω+ convex.
    T1b,
    /// Ground state, symmetric profile, no bias.
    T2a,
    /// Ground state, biased or asymmetric, one side convex.
    T2b,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Certified,
    Inconclusive,
}

/// Logarithmic cutoff: 1 on |s| < s0, ln(s*/|s|)/ln(s*/s0) up to s*, 0 beyond.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct InnerMollifier {
    pub s0: f64,
    pub s_star: f64,
}

pub fn inner_mollifier(s0: f64, s_star: f64) -> Result<InnerMollifier> {
    if !(s0 > 0.0 && s_star > s0 && s_star.is_finite()) {
        return Err(Error::Validation(format!("mollifier needs s* > s0 > 0, got s0 = {s0}, s* = {s_star}")));
    }
    Ok(InnerMollifier { s0, s_star })
}

impl InnerMollifier {
    pub fn log_ratio(&self) -> f64 {
        (self.s_star / self.s0).ln()
    }

    pub fn value(&self, s: f64) -> f64 {
        let s = s.abs();
        if s < self.s0 {
            1.0
        } else if s <= self.s_star {
            (self.s_star / s).ln() / self.log_ratio()
        } else {
            0.0
        }
    }

    pub fn deriv(&self, s: f64) -> f64 {
        let r = s.abs();
        if r < self.s0 || r > self.s_star {
            0.0
        } else {
            -s.signum() / (r * self.log_ratio())
        }
    }

    /// ∫_{s0}^{s*} χ'² = (ln(s*/s0))⁻²(1/s0 - 1/s*), one half-line.
    pub fn half_line_deriv_norm_sq(&self) -> f64 {
        (1.0 / self.s0 - 1.0 / self.s_star) / self.log_ratio().powi(2)
    }

    /// ‖χ'‖² over the whole line.
    pub fn deriv_norm_sq(&self) -> f64 {
        2.0 * self.half_line_deriv_norm_sq()
    }

    pub fn norm_sq(&self) -> f64 {
        2.0 * self.sq_integral(0.0, f64::INFINITY)
    }

    /// ∫_lo^hi χ² for 0 ≤ lo ≤ hi ≤ ∞.
    pub fn sq_integral(&self, lo: f64, hi: f64) -> f64 {
        let l2 = self.log_ratio().powi(2);
        // s[ln² + 2 ln + 2] differentiates to ln²(s*/s)
        let taper = |s: f64| {
            let q = (self.s_star / s).ln();
            s * (q * q + 2.0 * q + 2.0) / l2
        };
        let mut acc = 0.0;
        let (p0, p1) = (lo.min(self.s0), hi.min(self.s0));
        acc += (p1 - p0).max(0.0);
        let (q0, q1) = (lo.max(self.s0), hi.min(self.s_star));
        if q1 > q0 {
            acc += taper(q1) - taper(q0);
        }
        acc
    }

    /// ∫_lo^hi χ'² for 0 ≤ lo ≤ hi ≤ ∞.
    pub fn deriv_sq_integral(&self, lo: f64, hi: f64) -> f64 {
        let (q0, q1) = (lo.max(self.s0), hi.min(self.s_star));
        if q1 > q0 {
            (1.0 / q0 - 1.0 / q1) / self.log_ratio().powi(2)
        } else {
            0.0
        }
    }
}

/// Corrector g(s,t) = A·sign·sin²(π(s-s_lo)/(s_hi-s_lo))·sin²(π(t-t_lo)/(t_hi-t_lo))
/// and the integrals it contributes to the inner form.
#[derive(Clone, Debug, Serialize)]
pub struct CorrectorSpec {
    pub s_lo: f64,
    pub s_hi: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub sign: f64,
    pub amplitude: f64,
    pub kappa_sign: f64,
    /// δ = -∫∫ φ0' g κ ds dt > 0.
    pub delta: f64,
    /// Coefficient of ν in the inner form, computed without integrating by parts.
    pub linear: f64,
    /// Coefficient of ν².
    pub quadratic: f64,
    /// Cross term 2∫∫ φ0 g (1 - κt) and ∫∫ g² (1 - κt), for ‖ψ‖².
    pub cross_mass: f64,
    pub mass: f64,
    /// Mesh-doubling differences of the two coefficients.
    pub linear_err: f64,
    pub quadratic_err: f64,
}

impl CorrectorSpec {
    pub fn value(&self, s: f64, t: f64) -> f64 {
        if s <= self.s_lo || s >= self.s_hi || t <= self.t_lo || t >= self.t_hi {
            return 0.0;
        }
        self.sign * self.amplitude * bump(s, self.s_lo, self.s_hi).0 * bump(t, self.t_lo, self.t_hi).0
    }

    /// Nonzero root of Bν + Cν²; the schedule halves down from it.
    pub fn nu_hat(&self) -> f64 {
        -self.linear / self.quadratic
    }
}

// sin² bump and its derivative
fn bump(x: f64, lo: f64, hi: f64) -> (f64, f64) {
    let w = hi - lo;
    let th = PI * (x - lo) / w;
    let (s, c) = th.sin_cos();
    (s * s, 2.0 * s * c * PI / w)
}

struct CorrectorQuad {
    linear: f64,
    delta: f64,
    quadratic: f64,
    cross_mass: f64,
    mass: f64,
}

fn corrector_quadrature(
    curve: &PlanarCurve,
    profile: &ProfilePotential,
    mode: &TransverseMode,
    s_win: (f64, f64),
    t_win: (f64, f64),
    refine: usize,
) -> CorrectorQuad {
    let g = GaussRule::new(8);
    let mu = mode.mu;
    let ns = 16 * refine;
    let ds = (s_win.1 - s_win.0) / ns as f64;
    let mut s_nodes = vec![];
    for k in 0..ns {
        let lo = s_win.0 + ds * k as f64;
        s_nodes.extend(g.mapped(lo, lo + ds));
    }
    let tb = clip_breaks(t_win.0, t_win.1, &profile.breakpoints());
    let mut t_nodes = vec![];
    for w in tb.windows(2) {
        let panels = (((w[1] - w[0]) / (t_win.1 - t_win.0) * 32.0).ceil() as usize).max(2) * refine;
        let dt = (w[1] - w[0]) / panels as f64;
        for k in 0..panels {
            let lo = w[0] + dt * k as f64;
            t_nodes.extend(g.mapped(lo, lo + dt));
        }
    }
    let tdata: Vec<(f64, f64, f64, f64, f64, f64, f64)> = t_nodes
        .iter()
        .map(|&(t, w)| {
            let (gt, dgt) = bump(t, t_win.0, t_win.1);
            (t, w, gt, dgt, mode.phi(t), mode.dphi(t), profile.v(t) - mu)
        })
        .collect();
    let mut q = CorrectorQuad { linear: 0.0, delta: 0.0, quadratic: 0.0, cross_mass: 0.0, mass: 0.0 };
    for &(s, ws) in &s_nodes {
        let (gs, dgs) = bump(s, s_win.0, s_win.1);
        let k = curve.kappa(s);
        for &(t, wt, gt, dgt, p, dp, vm) in &tdata {
            let w = ws * wt;
            let j = 1.0 - k * t;
            q.linear += 2.0 * w * (dp * gs * dgt + vm * p * gs * gt) * j;
            q.delta -= w * dp * gs * gt * k;
            q.quadratic += w * (dgs * dgs * gt * gt / j + gs * gs * (dgt * dgt + vm * gt * gt) * j);
            q.cross_mass += 2.0 * w * p * gs * gt * j;
            q.mass += w * gs * gs * gt * gt * j;
        }
    }
    q
}

/// Corrector on a given rectangle with the given sign and amplitude.
pub fn corrector_on(
    curve: &PlanarCurve,
    profile: &ProfilePotential,
    mode: &TransverseMode,
    s_win: (f64, f64),
    t_win: (f64, f64),
    sign: f64,
    amplitude: f64,
) -> CorrectorSpec {
    let c1 = corrector_quadrature(curve, profile, mode, s_win, t_win, 1);
    let c2 = corrector_quadrature(curve, profile, mode, s_win, t_win, 2);
    let f = sign * amplitude;
    let kappa_sign = curve.kappa(0.5 * (s_win.0 + s_win.1)).signum();
    CorrectorSpec {
        s_lo: s_win.0,
        s_hi: s_win.1,
        t_lo: t_win.0,
        t_hi: t_win.1,
        sign,
        amplitude,
        kappa_sign,
        delta: f * c2.delta,
        linear: f * c2.linear,
        quadratic: amplitude * amplitude * c2.quadratic,
        cross_mass: f * c2.cross_mass,
        mass: amplitude * amplitude * c2.mass,
        linear_err: (f * (c2.linear - c1.linear)).abs(),
        quadratic_err: (amplitude * amplitude * (c2.quadratic - c1.quadratic)).abs(),
    }
}

// maximal runs of fixed sign of f over the sample grid
fn sign_runs(xs: &[f64], fs: &[f64], floor: f64) -> Vec<(f64, f64, f64)> {
    let mut runs = vec![];
    let mut start: Option<(usize, f64)> = None;
    for i in 0..xs.len() {
        let sg = if fs[i].abs() <= floor { 0.0 } else { fs[i].signum() };
        match start {
            Some((i0, s0)) if sg != s0 => {
                runs.push((xs[i0], xs[i - 1], s0));
                start = if sg != 0.0 { Some((i, sg)) } else { None };
            }
            None if sg != 0.0 => start = Some((i, sg)),
            _ => {}
        }
    }
    if let Some((i0, s0)) = start {
        runs.push((xs[i0], xs[xs.len() - 1], s0));
    }
    runs
}

/// Picks the fixed-sign rectangle (κ window × φ0' window) with the largest
/// gain B²/4C and signs g so that the linear term is negative.
pub fn choose_corrector(curve: &PlanarCurve, profile: &ProfilePotential, mode: &TransverseMode) -> Result<CorrectorSpec> {
    let a = mode.a;
    let mut s_wins = vec![];
    for p in curve.pieces() {
        let n = 256;
        let xs: Vec<f64> = (0..=n).map(|k| p.s_start + (p.s_end - p.s_start) * k as f64 / n as f64).collect();
        let ks: Vec<f64> = xs.iter().map(|&s| p.spec.kappa(s - p.s_start)).collect();
        let kmax = ks.iter().fold(0.0f64, |m, k| m.max(k.abs()));
        if kmax == 0.0 {
            continue;
        }
        for (lo, hi, _) in sign_runs(&xs, &ks, 1e-12 * kmax) {
            if hi - lo > 1e-3 * a {
                s_wins.push((lo, hi));
            }
        }
    }
    let (ts, _, dps) = mode.interior_nodes();
    let dmax = dps.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let mut t_wins: Vec<(f64, f64)> = sign_runs(ts, dps, 1e-10 * dmax.max(1e-300))
        .into_iter()
        .filter(|(lo, hi, _)| hi - lo > 2e-2 * a)
        .map(|(lo, hi, _)| (lo, hi))
        .collect();
    // shorter windows near the steepest part sometimes win
    let halves: Vec<(f64, f64)> = t_wins
        .iter()
        .flat_map(|&(lo, hi)| {
            let m = 0.5 * (lo + hi);
            [(lo, m), (m, hi)]
        })
        .collect();
    t_wins.extend(halves);
    if s_wins.is_empty() || t_wins.is_empty() {
        return Err(Error::Internal(
            "no rectangle on which both the curvature and the derivative of the transverse mode keep a sign".into(),
        ));
    }
    let mut best: Option<(f64, CorrectorSpec)> = None;
    for &sw in &s_wins {
        for &tw in &t_wins {
            let c = corrector_on(curve, profile, mode, sw, tw, 1.0, 1.0);
            let sign = if c.linear > 0.0 { -1.0 } else { 1.0 };
            let c = CorrectorSpec {
                sign,
                delta: sign * c.delta,
                linear: sign * c.linear,
                cross_mass: sign * c.cross_mass,
                ..c
            };
            if c.quadratic <= 0.0 || c.linear >= 0.0 {
                continue;
            }
            let gain = c.linear * c.linear / (4.0 * c.quadratic);
            if best.as_ref().is_none_or(|(g, _)| gain > *g) {
                best = Some((gain, c));
            }
        }
    }
    best.map(|(_, c)| c)
        .ok_or_else(|| Error::Internal("corrector search produced no admissible rectangle".into()))
}

/// Parameters of one trial function.
#[derive(Clone, Debug, Serialize)]
pub struct TrialParams {
    pub s0: f64,
    pub s_star: f64,
    pub nu: f64,
    /// Disc B_{r0/2}(O) contains the curved part.
    pub r0: f64,
    /// |s| ≥ ŝ lies outside B_{r0}(O).
    pub s_hat: f64,
    /// Half-width of disjoint cones around the asymptote directions.
    pub d_theta0: f64,
    pub g_spec: Option<CorrectorSpec>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PreconditionCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> PreconditionCheck {
    PreconditionCheck { name: name.into(), passed, detail }
}

/// Value and error of one schedule point.
#[derive(Clone, Debug, Serialize)]
pub struct TraceEntry {
    pub s0: f64,
    pub s_star: f64,
    pub nu: f64,
    pub shifted_form: f64,
    pub error_bound: f64,
    pub certified: bool,
}

/// Decomposition of the biased-resonance value around its curvature term.
#[derive(Clone, Debug, Serialize)]
pub struct BiasedStructure {
    /// -½∫κ, the curvature term that survives the inner/outer cancellation.
    pub curvature_term: f64,
    /// The coefficient -∫κ as stated for this case in the literature.
    pub stated_curvature_term: f64,
    /// Bν + Cν².
    pub corrector_term: f64,
    /// shiftedForm minus the two terms above.
    pub residual: f64,
    pub curvature_dominates: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CertificateReport {
    pub case_tag: CaseTag,
    pub params: TrialParams,
    pub mu: f64,
    /// Strip contribution of φ0χ_in.
    pub inner_value: f64,
    /// Exterior contribution, both sides.
    pub outer_value: f64,
    /// Corrector contribution Bν + Cν².
    pub cross_value: f64,
    pub shifted_form: f64,
    /// Same value with every quadrature mesh coarsened by two.
    pub shifted_form_coarse: f64,
    pub quadrature_error_bound: f64,
    pub verdict: Verdict,
    pub precondition_checks: Vec<PreconditionCheck>,
    /// Largest jump of ψ across the exterior cut locus, relative to max|ψ|.
    pub continuity_mismatch: f64,
    /// max |∇φ·∇χ_out| / (|∇φ||∇χ_out|) on sampled exterior points.
    pub orthogonality_residual: f64,
    pub norm_sq: f64,
    pub biased: Option<BiasedStructure>,
    pub trace: Vec<TraceEntry>,
    pub notes: Vec<String>,
}

/// Schedule limits for [`certify`].
#[derive(Clone, Debug, Serialize)]
pub struct Budget {
    pub s0_doublings: usize,
    pub ratios: Vec<f64>,
    /// Appended to `ratios` when a side has no exponential decay.
    pub flat_ratios: Vec<f64>,
    pub nu_levels: usize,
    /// Base σ-panel relative to min(a, 1/‖κ‖∞).
    pub panel: f64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            s0_doublings: 4,
            ratios: vec![1e2, 1e3, 1e4],
            flat_ratios: vec![1e6, 1e8, 1e12, 1e16, 1e24, 1e32, 1e48, 1e64, 1e96, 1e128, 1e192, 1e256],
            nu_levels: 8,
            panel: 0.25,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum SideModel {
    Decaying { sigma: f64, xi: f64, phi: f64, t_max: f64 },
    Flat { phi: f64, angle: f64 },
}

/// Exterior ψ for one case, usable pointwise.
pub struct OuterTrial<'a> {
    curve: &'a PlanarCurve,
    a: f64,
    chi: InnerMollifier,
    sides: [SideModel; 2],
}

impl OuterTrial<'_> {
    fn side_index(&self, t: f64) -> usize {
        if t > 0.0 {
            0
        } else {
            1
        }
    }

    /// ψ_out(x); NaN inside the strip.
    pub fn value(&self, x: [f64; 2]) -> f64 {
        let n = self.curve.nearest(x);
        if n.dist < self.a * (1.0 - 1e-12) {
            return f64::NAN;
        }
        match self.sides[self.side_index(n.t)] {
            SideModel::Decaying { xi, phi, .. } => phi * (-xi * (n.dist - self.a)).exp() * self.chi.value(n.s),
            SideModel::Flat { phi, .. } => {
                let o = self.curve.asymptotes().origin;
                phi * radial_chi(&self.chi, self.a, self.curve.asymptotes().c, norm(sub(x, o)))
            }
        }
    }

    /// The decaying factor φ alone (1 beyond the flat side).
    fn phi_part(&self, x: [f64; 2]) -> f64 {
        let n = self.curve.nearest(x);
        match self.sides[self.side_index(n.t)] {
            SideModel::Decaying { xi, phi, .. } => phi * (-xi * (n.dist - self.a)).exp(),
            SideModel::Flat { phi, .. } => phi,
        }
    }

    fn chi_part(&self, x: [f64; 2]) -> f64 {
        let n = self.curve.nearest(x);
        match self.sides[self.side_index(n.t)] {
            SideModel::Decaying { .. } => self.chi.value(n.s),
            SideModel::Flat { .. } => {
                let o = self.curve.asymptotes().origin;
                radial_chi(&self.chi, self.a, self.curve.asymptotes().c, norm(sub(x, o)))
            }
        }
    }
}

/// ψ on the whole plane: φ0(t)χ_in(s) + νg inside the strip, ψ_out outside.
pub struct TrialFunction<'a> {
    pub outer: OuterTrial<'a>,
    mode: &'a TransverseMode,
    corrector: Option<CorrectorSpec>,
    nu: f64,
}

impl TrialFunction<'_> {
    pub fn value(&self, x: [f64; 2]) -> f64 {
        let n = self.outer.curve.nearest(x);
        if n.dist < self.outer.a {
            let g = self.corrector.as_ref().map_or(0.0, |g| g.value(n.s, n.t));
            return self.mode.phi(n.t) * self.outer.chi.value(n.s) + self.nu * g;
        }
        self.outer.value(x)
    }
}

pub fn trial_function<'a>(
    case: CaseTag,
    mode: &'a TransverseMode,
    curve: &'a PlanarCurve,
    params: &TrialParams,
) -> Result<TrialFunction<'a>> {
    Ok(TrialFunction {
        outer: outer_trial(case, mode, curve, params)?,
        mode,
        corrector: params.g_spec.clone(),
        nu: params.nu,
    })
}

fn radial_chi(chi: &InnerMollifier, a: f64, c: f64, rho: f64) -> f64 {
    let d0 = chi.s0 - c;
    let q = (rho * rho - a * a).max(0.0).sqrt();
    if q < d0 {
        1.0
    } else {
        chi.value(q - d0 + chi.s0)
    }
}

fn side_models(curve: &PlanarCurve, mode: &TransverseMode) -> [SideModel; 2] {
    let a = mode.a;
    let asym = curve.asymptotes();
    let plus_angle = if asym.kind == AsymptoteKind::Crossing {
        let gamma = dot(asym.e_plus, asym.e_minus).clamp(-1.0, 1.0).acos();
        let n_plus = [-asym.t_plus[1], asym.t_plus[0]];
        if dot(n_plus, asym.e_minus) > 0.0 {
            gamma
        } else {
            2.0 * PI - gamma
        }
    } else {
        PI
    };
    let xp = mode.xi_plus.abs();
    let xm = mode.xi_minus.abs();
    let plus = if xp > 0.0 {
        SideModel::Decaying { sigma: 1.0, xi: xp, phi: mode.phi_plus, t_max: a + 36.0 / xp }
    } else {
        SideModel::Flat { phi: mode.phi_plus, angle: plus_angle }
    };
    let minus = if xm > 0.0 {
        SideModel::Decaying { sigma: -1.0, xi: xm, phi: 1.0, t_max: a + 36.0 / xm }
    } else {
        SideModel::Flat { phi: 1.0, angle: 2.0 * PI - plus_angle }
    };
    [plus, minus]
}

/// Exterior trial for the case; the mollifier comes from `params`.
pub fn outer_trial<'a>(
    case: CaseTag,
    mode: &TransverseMode,
    curve: &'a PlanarCurve,
    params: &TrialParams,
) -> Result<OuterTrial<'a>> {
    let sides = side_models(curve, mode);
    let flat = sides.iter().any(|s| matches!(s, SideModel::Flat { .. }));
    let expect_flat = matches!(case, CaseTag::T1a | CaseTag::T1b);
    if flat != expect_flat {
        return Err(Error::Validation(format!("case {case:?} does not match the transverse mode")));
    }
    if flat && curve.asymptotes().kind != AsymptoteKind::Crossing {
        return Err(Error::UnsupportedCase("flat exterior side needs crossing asymptotes".into()));
    }
    Ok(OuterTrial { curve, a: mode.a, chi: inner_mollifier(params.s0, params.s_star)?, sides })
}

/// ∫_a^u e^{-2ξ(t-a)} (1 - σκt) dt and ∫_a^u e^{-2ξ(t-a)} dt.
fn t_integrals(xi: f64, a: f64, sk: f64, u: f64) -> (f64, f64) {
    let p = 2.0 * xi;
    let (e0, e1) = if u.is_infinite() {
        (1.0 / p, 1.0 / (p * p))
    } else {
        let w = u - a;
        let em = -(-p * w).exp_m1();
        (em / p, (em - p * w * (-p * w).exp()) / (p * p))
    };
    ((1.0 - sk * a) * e0 - sk * e1, e0)
}

struct Evaluator<'a> {
    curve: &'a PlanarCurve,
    a: f64,
    mu_err: f64,
    // uncertainty of the transverse form per unit ∫χ²
    line_err: f64,
    t_energy: f64,
    k1: f64,
    n0: f64,
    tau: f64,
    sides: [SideModel; 2],
    s_far: (f64, f64),
    base_panel: f64,
    core: (f64, f64),
}

#[derive(Clone, Copy, Debug, Default)]
struct Parts {
    inner: f64,
    total: f64,
    norm_sq: f64,
    mismatch: f64,
    line_err: f64,
}

impl<'a> Evaluator<'a> {
    fn new(curve: &'a PlanarCurve, profile: &ProfilePotential, mode: &TransverseMode, panel: f64) -> Self {
        let a = mode.a;
        let g = GaussRule::new(6);
        let g_hi = GaussRule::new(10);
        let (ts, _, _) = mode.interior_nodes();
        let (mut t_energy, mut k1, mut t_hi, mut t_abs) = (0.0, 0.0, 0.0, 0.0);
        let e_at = |t: f64| {
            let (d, w) = (mode.dphi(t).powi(2), (profile.v(t) - mode.mu) * mode.phi(t).powi(2));
            (d + w, d + w.abs())
        };
        for w in ts.windows(2) {
            for (t, wt) in g.mapped(w[0], w[1]) {
                let (e, ea) = e_at(t);
                t_energy += wt * e;
                k1 += wt * t * e;
                t_abs += wt * ea;
            }
            for (t, wt) in g_hi.mapped(w[0], w[1]) {
                t_hi += wt * e_at(t).0;
            }
        }
        let sides = side_models(curve, mode);
        // The full-line transverse form of the exact mode vanishes, so whatever
        // the quadrature returns for it is error; it multiplies ∫χ², which grows
        // like s*, and caps the usable mollifier length.
        let mut line = t_energy;
        for m in &sides {
            if let SideModel::Decaying { xi, phi, .. } = *m {
                line += phi * phi * xi;
                t_abs += 2.0 * phi * phi * xi;
            }
        }
        let line_err = line.abs() + (t_hi - t_energy).abs() + 64.0 * f64::EPSILON * t_abs;
        let km = curve.kappa_max();
        let base_panel = panel * if km > 0.0 { a.min(1.0 / km) } else { a };
        let (smin, smax) = curve.curved_support();
        let (l0, l1) = curve.listed_range();
        let core = (smin.min(l0) - a, smax.max(l1) + a);
        let mut ev = Evaluator {
            curve,
            a,
            mu_err: mode.richardson_error,
            line_err,
            t_energy,
            k1,
            n0: mode.norm_sq_inner(),
            tau: curve.turning_angle(),
            sides,
            s_far: (0.0, 0.0),
            base_panel,
            core,
        };
        ev.s_far = (ev.far_start(-1.0), ev.far_start(1.0));
        ev
    }

    // every decaying side has its foot all the way to t_max beyond |s| = S
    fn far_ok(&self, s: f64) -> bool {
        self.sides.iter().all(|m| match *m {
            SideModel::Decaying { sigma, t_max, .. } => self.foot_holds(s, sigma, t_max),
            SideModel::Flat { .. } => true,
        })
    }

    fn far_start(&self, dir: f64) -> f64 {
        let mut s = (if dir > 0.0 { self.core.1 } else { -self.core.0 }).max(self.a);
        for _ in 0..200 {
            if [1.0, 1.5, 2.0, 4.0, 8.0].iter().all(|f| self.far_ok(dir * s * f)) {
                return s;
            }
            s *= 1.25;
        }
        s
    }

    fn foot_holds(&self, s: f64, sigma: f64, t: f64) -> bool {
        let x = self.curve.tube_point(s, sigma * t);
        self.curve.distance(x) >= t - 1e-11 * (1.0 + t)
    }

    // upper end of the normal segment used for the σ-node, never below the cut
    fn segment_end(&self, s: f64, sigma: f64, t_max: f64) -> (f64, bool) {
        let sk = sigma * self.curve.kappa(s);
        if self.foot_holds(s, sigma, t_max) {
            return (if sk > 0.0 { (1.0 / sk).max(t_max) } else { f64::INFINITY }, false);
        }
        let (mut lo, mut hi) = (self.a, t_max);
        if !self.foot_holds(s, sigma, lo) {
            return (self.a, true);
        }
        while hi - lo > 1e-10 * (1.0 + hi) {
            let mid = 0.5 * (lo + hi);
            if self.foot_holds(s, sigma, mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (hi, true)
    }

    fn mesh(&self, lo: f64, hi: f64, breaks: &[f64], refine: f64) -> Vec<f64> {
        let b = clip_breaks(lo, hi, breaks);
        let mut edges = vec![b[0]];
        for w in b.windows(2) {
            let mut x = w[0];
            while x < w[1] {
                let d = (self.core.0 - x).max(x - self.core.1).max(0.0);
                let h = (self.base_panel.max(0.05 * d)) / refine;
                let n = ((w[1] - x) / h).ceil();
                let step = if n <= 1.0 { w[1] - x } else { h };
                x = if n <= 1.0 { w[1] } else { x + step };
                edges.push(x);
            }
        }
        edges
    }

    fn radial(&self, chi: &InnerMollifier, angle: f64, phi: f64, refine: usize) -> f64 {
        let c = self.curve.asymptotes().c;
        let d0 = chi.s0 - c;
        let (u0, u1) = (d0.ln(), (chi.s_star - c).ln());
        let panels = ((u1 - u0) * 2.0).ceil().max(4.0) as usize * refine;
        let a = self.a;
        let g = GaussRule::new(8);
        let val = g.composite(u0, u1, panels, |u| {
            let q = u.exp();
            (angle - 2.0 * (a / q).atan()) * (q * q + a * a) / (q + c).powi(2)
        });
        phi * phi * val / chi.log_ratio().powi(2)
    }

    fn parts(&self, chi: &InnerMollifier, refine: usize) -> Parts {
        let (sm, sp) = self.s_far;
        let mut total = 0.0;
        let mut norm_sq = self.n0 * chi.norm_sq();
        // far arms: κ = 0, the whole normal segment in closed form
        let (mut csq, mut cd) = (self.t_energy, self.n0);
        for m in &self.sides {
            if let SideModel::Decaying { xi, phi, .. } = *m {
                csq += phi * phi * xi;
                cd += phi * phi / (2.0 * xi);
            }
        }
        let far_sq = chi.sq_integral(sm, f64::INFINITY) + chi.sq_integral(sp, f64::INFINITY);
        let far_d = chi.deriv_sq_integral(sm, f64::INFINITY) + chi.deriv_sq_integral(sp, f64::INFINITY);
        total += csq * far_sq + cd * far_d;
        // inner part over the numeric window
        total += self.t_energy * (chi.sq_integral(0.0, sm) + chi.sq_integral(0.0, sp)) - self.k1 * self.tau
            + self.n0 * (chi.deriv_sq_integral(0.0, sm) + chi.deriv_sq_integral(0.0, sp));
        let inner = self.t_energy * chi.norm_sq() - self.k1 * self.tau + self.n0 * chi.deriv_norm_sq();
        // decaying sides over [-S-, S+]
        let mut mismatch: f64 = 0.0;
        if self.sides.iter().any(|m| matches!(m, SideModel::Decaying { .. })) {
            let mut breaks = self.curve.breakpoints();
            breaks.extend([-chi.s0, chi.s0, -chi.s_star, chi.s_star, self.core.0 + self.a, self.core.1 - self.a]);
            let edges = self.mesh(-sm, sp, &breaks, refine as f64);
            let g = GaussRule::new(8);
            let nodes: Vec<(f64, f64)> = edges.windows(2).flat_map(|w| g.mapped(w[0], w[1]).collect::<Vec<_>>()).collect();
            let acc: Vec<(f64, f64, f64)> = nodes
                .par_iter()
                .map(|&(s, w)| {
                    let (c, dc) = (chi.value(s), chi.deriv(s));
                    let k = self.curve.kappa(s);
                    let (mut e, mut nrm, mut mis) = (0.0, 0.0, 0.0f64);
                    for m in &self.sides {
                        if let SideModel::Decaying { sigma, xi, phi, t_max } = *m {
                            let (u, cut) = self.segment_end(s, sigma, t_max);
                            let (ij, i1) = t_integrals(xi, self.a, sigma * k, u);
                            e += phi * phi * (2.0 * xi * xi * c * c * ij + dc * dc * i1);
                            nrm += phi * phi * c * c * ij;
                            if cut && refine > 1 && dc != 0.0 {
                                let beyond = self.curve.tube_point(s, sigma * (u + 1e-7 * (1.0 + u)));
                                let other = self.curve.nearest(beyond).s;
                                let jump = (chi.value(other) - c).abs() * phi * (-xi * (u - self.a)).exp();
                                mis = mis.max(jump);
                            }
                        }
                    }
                    (w * e, w * nrm, mis)
                })
                .collect();
            for (e, n, m) in acc {
                total += e;
                norm_sq += n;
                mismatch = mismatch.max(m);
            }
            for m in &self.sides {
                if let SideModel::Decaying { xi, phi, .. } = *m {
                    norm_sq += phi * phi / (2.0 * xi) * far_sq;
                }
            }
        }
        for m in &self.sides {
            if let SideModel::Flat { phi, angle } = *m {
                total += self.radial(chi, angle, phi, refine);
            }
        }
        let scale = self.sides.iter().fold(1.0f64, |acc, m| match *m {
            SideModel::Decaying { phi, .. } | SideModel::Flat { phi, .. } => acc.max(phi.abs()),
        });
        Parts { inner, total, norm_sq, mismatch: mismatch / scale, line_err: self.line_err * chi.norm_sq() }
    }

    fn orthogonality(&self, outer: &OuterTrial) -> f64 {
        let chi = &outer.chi;
        let mut worst: f64 = 0.0;
        for m in &self.sides {
            if let SideModel::Decaying { sigma, xi, .. } = *m {
                for k in 0..16 {
                    let frac = (k as f64 + 0.5) / 16.0;
                    let r = chi.s0 * (chi.s_star / chi.s0).powf(frac.min(0.2));
                    for dir in [-1.0, 1.0] {
                        let s = dir * r;
                        let t = self.a + 0.5 / xi;
                        let x = self.curve.tube_point(s, sigma * t);
                        let h = 1e-5 * (1.0 + t);
                        let grad = |f: &dyn Fn([f64; 2]) -> f64| {
                            [
                                (f([x[0] + h, x[1]]) - f([x[0] - h, x[1]])) / (2.0 * h),
                                (f([x[0], x[1] + h]) - f([x[0], x[1] - h])) / (2.0 * h),
                            ]
                        };
                        let gp = grad(&|y| outer.phi_part(y));
                        let gc = grad(&|y| outer.chi_part(y));
                        let den = norm(gp) * norm(gc);
                        if den > 0.0 {
                            worst = worst.max(dot(gp, gc).abs() / den);
                        }
                    }
                }
            }
        }
        worst
    }
}

fn geometry_params(curve: &PlanarCurve, a: f64) -> (f64, f64, f64, f64) {
    let asym = curve.asymptotes();
    let o = asym.origin;
    let (smin, smax) = curve.curved_support();
    let (l0, l1) = curve.listed_range();
    let mut rc: f64 = 0.0;
    let mut rl: f64 = 0.0;
    for k in 0..=512 {
        let f = k as f64 / 512.0;
        rc = rc.max(norm(sub(curve.position(smin + (smax - smin) * f), o)));
        rl = rl.max(norm(sub(curve.position(l0.min(smin) + (l1.max(smax) - l0.min(smin)) * f), o)));
    }
    let r0 = (2.0 * rc).max(a);
    let ends = [l0.min(smin), l1.max(smax)];
    let s_hat = ends
        .iter()
        .map(|&s| s.abs() + norm(sub(curve.position(s), o)) + r0)
        .fold(r0, f64::max);
    let d_theta0 = match asym.kind {
        AsymptoteKind::Crossing => 0.5 * asym.theta0.min(PI - asym.theta0),
        _ => 0.25 * PI,
    };
    (r0, s_hat, d_theta0, rl)
}

/// Smallest s0 honoring the geometric invariants of the case.
fn minimal_s0(curve: &PlanarCurve, a: f64, flat: bool) -> (f64, f64, f64, f64) {
    let (r0, s_hat, d_theta0, rl) = geometry_params(curve, a);
    let (smin, smax) = curve.curved_support();
    let mut s0 = (smin.abs().max(smax.abs()) + a).max(s_hat + a);
    if flat {
        let c = curve.asymptotes().c;
        // the circle through x(±s0, ±a) must clear the curved part of the strip
        let d0 = ((rl + a).powi(2) - a * a).max(0.0).sqrt() + a;
        s0 = s0.max(d0 + c);
    }
    (s0, r0, s_hat, d_theta0)
}

/// Case from the mode kind, bias, symmetry, sign condition and convexity.
pub fn select_case(
    curve: &PlanarCurve,
    profile: &ProfilePotential,
    mode: &TransverseMode,
) -> Result<(CaseTag, Vec<PreconditionCheck>)> {
    let mut checks = vec![];
    let a = profile.a;
    let rep = curve.validate_strip(a)?;
    if !rep.strip_ok() {
        return Err(Error::Geometry(format!(
            "strip of halfwidth {a} is not embedded (local margin {:.3e})",
            rep.local_margin
        )));
    }
    checks.push(check("strip_embedded", true, format!("1 - a‖κ‖∞ = {:.6}", rep.local_margin)));
    if !rep.separation_ok {
        return Err(Error::UnsupportedCase(
            "asymptotes are parallel and point the same way (U-shape); no case applies".into(),
        ));
    }
    let kind = curve.asymptotes().kind;
    checks.push(check("asymptote_geometry", true, format!("{kind:?}")));
    let symmetric = profile.symmetric || profile.is_symmetric(1e-12);
    let tau = curve.turning_angle();
    let convex = curve.convex_side();
    let v0 = profile.v0;
    match mode.kind {
        ModeKind::NoneBelowZero => Err(Error::UnsupportedCase(
            "transverse operator has neither a bound state nor a zero-energy resonance".into(),
        )),
        ModeKind::GroundState => {
            checks.push(check("mode_kind", true, format!("ground state, μ = {:.12e}", mode.mu)));
            if v0 == 0.0 && symmetric {
                checks.push(check("profile_symmetry", true, "v(t) = v(-t)".into()));
                checks.push(check("no_bias", true, "V0 = 0".into()));
                Ok((CaseTag::T2a, checks))
            } else if convex != ConvexSide::Neither {
                checks.push(check("convexity", true, format!("{convex:?}")));
                Ok((CaseTag::T2b, checks))
            } else {
                Err(Error::UnsupportedCase(format!(
                    "ground state with {} and a curvature of both signs: no side is convex",
                    if v0 > 0.0 { "bias" } else { "asymmetric profile" }
                )))
            }
        }
        ModeKind::ZeroResonance => {
            checks.push(check("mode_kind", true, "zero-energy resonance, μ = 0".into()));
            if kind != AsymptoteKind::Crossing {
                return Err(Error::UnsupportedCase(
                    "resonance case with parallel asymptotes: the radial exterior mollifier needs crossing asymptotes"
                        .into(),
                ));
            }
            if v0 == 0.0 {
                let val = (mode.phi_plus.powi(2) - 1.0) * tau;
                let ok = symmetric || val <= 1e-10 * tau.abs().max(1.0);
                if !ok {
                    return Err(Error::UnsupportedCase(format!(
                        "(φ0(a)² - φ0(-a)²)∫κ = {val:.6e} > 0 and no bias: no case applies"
                    )));
                }
                checks.push(check(
                    "sign_condition",
                    true,
                    format!("(φ0(a)² - φ0(-a)²)∫κ = {val:.6e}{}", if symmetric { " (symmetric profile)" } else { "" }),
                ));
                Ok((CaseTag::T1a, checks))
            } else if convex == ConvexSide::PlusConvex && tau > 0.0 {
                checks.push(check("convexity", true, "Ω+ convex".into()));
                Ok((CaseTag::T1b, checks))
            } else {
                Err(Error::UnsupportedCase(
                    "biased resonance needs a convex Ω+ (the side carrying V0)".into(),
                ))
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    case: CaseTag,
    checks: Vec<PreconditionCheck>,
    params: TrialParams,
    mode: &TransverseMode,
    ev: &Evaluator,
    coarse: Parts,
    fine: Parts,
    corr: Option<&CorrectorSpec>,
    trace: Vec<TraceEntry>,
    notes: Vec<String>,
) -> Result<CertificateReport> {
    let nu = params.nu;
    let (b, c, be, ce, cm, m) = corr.map_or((0.0, 0.0, 0.0, 0.0, 0.0, 0.0), |g| {
        (g.linear, g.quadratic, g.linear_err, g.quadratic_err, g.cross_mass, g.mass)
    });
    let cross = b * nu + c * nu * nu;
    let shifted = fine.total + cross;
    let shifted_coarse = coarse.total + cross;
    let norm_sq = fine.norm_sq + cm * nu + m * nu * nu;
    let err = (fine.total - coarse.total).abs() + fine.line_err + be * nu + ce * nu * nu + ev.mu_err * norm_sq.abs();
    let continuity_ok = fine.mismatch < 1e-8;
    let mut notes = notes;
    if !continuity_ok {
        notes.push(format!("exterior trial jumps by {:.3e} across the cut locus", fine.mismatch));
    }
    let verdict = if continuity_ok && shifted + err < 0.0 { Verdict::Certified } else { Verdict::Inconclusive };
    let outer_trial = outer_trial(case, mode, ev.curve, &params)?;
    let orth = ev.orthogonality(&outer_trial);
    let biased = (case == CaseTag::T1b).then(|| {
        let curvature_term = -0.5 * ev.tau;
        let residual = shifted - curvature_term - cross;
        BiasedStructure {
            curvature_term,
            stated_curvature_term: -ev.tau,
            corrector_term: cross,
            residual,
            curvature_dominates: curvature_term < 0.0 && curvature_term.abs() > residual.abs() + cross.abs(),
        }
    });
    Ok(CertificateReport {
        case_tag: case,
        params,
        mu: mode.mu,
        inner_value: fine.inner,
        outer_value: fine.total - fine.inner,
        cross_value: cross,
        shifted_form: shifted,
        shifted_form_coarse: shifted_coarse,
        quadrature_error_bound: err,
        verdict,
        precondition_checks: checks,
        continuity_mismatch: fine.mismatch,
        orthogonality_residual: orth,
        norm_sq,
        biased,
        trace,
        notes,
    })
}

/// Quadrature options for [`evaluate_shifted_form_with`].
#[derive(Clone, Copy, Debug)]
pub struct FormOptions {
    /// Base σ-panel relative to min(a, 1/‖κ‖∞); the error bound compares it
    /// with the halved mesh.
    pub panel: f64,
}

impl Default for FormOptions {
    fn default() -> Self {
        FormOptions { panel: Budget::default().panel }
    }
}

pub fn evaluate_shifted_form(
    curve: &PlanarCurve,
    profile: &ProfilePotential,
    mode: &TransverseMode,
    params: &TrialParams,
    case: CaseTag,
) -> Result<CertificateReport> {
    evaluate_shifted_form_with(curve, profile, mode, params, case, FormOptions::default())
}

pub fn evaluate_shifted_form_with(
    curve: &PlanarCurve,
    profile: &ProfilePotential,
    mode: &TransverseMode,
    params: &TrialParams,
    case: CaseTag,
    opts: FormOptions,
) -> Result<CertificateReport> {
    let chi = inner_mollifier(params.s0, params.s_star)?;
    let (smin, smax) = curve.curved_support();
    if params.s0 <= smin.abs().max(smax.abs()) {
        return Err(Error::Validation(format!(
            "s0 = {} does not enclose the curved part [{smin}, {smax}]",
            params.s0
        )));
    }
    outer_trial(case, mode, curve, params)?;
    let ev = Evaluator::new(curve, profile, mode, opts.panel);
    let coarse = ev.parts(&chi, 1);
    let fine = ev.parts(&chi, 2);
    assemble(case, vec![], params.clone(), mode, &ev, coarse, fine, params.g_spec.as_ref(), vec![], vec![])
}

/// Case selection and the parameter schedule; stops at the first certified point.
pub fn certify(curve: &PlanarCurve, profile: &ProfilePotential, budget: &Budget) -> Result<CertificateReport> {
    let mode = solve_threshold(profile)?;
    certify_with_mode(curve, profile, &mode, budget)
}

pub fn certify_with_mode(
    curve: &PlanarCurve,
    profile: &ProfilePotential,
    mode: &TransverseMode,
    budget: &Budget,
) -> Result<CertificateReport> {
    let a = profile.a;
    let (case, checks) = select_case(curve, profile, mode)?;
    let flat = matches!(case, CaseTag::T1a | CaseTag::T1b);
    let mut notes = vec![];
    let corr = if curve.kappa_max() > 0.0 {
        Some(choose_corrector(curve, profile, mode)?)
    } else {
        notes.push("κ ≡ 0: no corrector, ν = 0".into());
        None
    };
    if curve.asymptotes().kind == AsymptoteKind::ParallelCodirected {
        notes.push("parallel codirected asymptotes: O is the midpoint of the arm endpoints".into());
    }
    let (s0_min, r0, s_hat, d_theta0) = minimal_s0(curve, a, flat);
    let ev = Evaluator::new(curve, profile, mode, budget.panel);
    let mut ratios = budget.ratios.clone();
    if flat {
        ratios.extend(budget.flat_ratios.iter().copied());
    }
    let nus: Vec<f64> = match &corr {
        Some(g) => (1..=budget.nu_levels.max(1)).map(|j| g.nu_hat() / 2f64.powi(j as i32)).collect(),
        None => vec![0.0],
    };
    let mut trace = vec![];
    let mut best: Option<(f64, f64, f64, f64, Parts, Parts)> = None;
    for level in 0..budget.s0_doublings.max(1) {
        let s0 = s0_min * 2f64.powi(level as i32);
        let evals: Vec<(f64, Parts, Parts)> = ratios
            .par_iter()
            .filter(|&&r| (s0 * r).is_finite() && s0 * r < 1e300)
            .map(|&r| {
                let chi = InnerMollifier { s0, s_star: s0 * r };
                (s0 * r, ev.parts(&chi, 1), ev.parts(&chi, 2))
            })
            .collect();
        for (s_star, coarse, fine) in evals {
            for &nu in &nus {
                let (b, c, be, ce, cm, m) = corr.as_ref().map_or((0.0, 0.0, 0.0, 0.0, 0.0, 0.0), |g| {
                    (g.linear, g.quadratic, g.linear_err, g.quadratic_err, g.cross_mass, g.mass)
                });
                let q = fine.total + b * nu + c * nu * nu;
                let nsq = fine.norm_sq + cm * nu + m * nu * nu;
                let err =
                    (fine.total - coarse.total).abs() + fine.line_err + be * nu + ce * nu * nu + ev.mu_err * nsq.abs();
                let ok = fine.mismatch < 1e-8 && q + err < 0.0;
                trace.push(TraceEntry { s0, s_star, nu, shifted_form: q, error_bound: err, certified: ok });
                if best.as_ref().is_none_or(|bst| q + err < bst.0) {
                    best = Some((q + err, s0, s_star, nu, coarse, fine));
                }
                if ok {
                    let params = TrialParams { s0, s_star, nu, r0, s_hat, d_theta0, g_spec: corr.clone() };
                    return assemble(case, checks, params, mode, &ev, coarse, fine, corr.as_ref(), trace, notes);
                }
            }
        }
    }
    let (_, s0, s_star, nu, coarse, fine) = best.expect("schedule is never empty");
    notes.push("schedule exhausted without a negative value beyond the error bound".into());
    let params = TrialParams { s0, s_star, nu, r0, s_hat, d_theta0, g_spec: corr.clone() };
    assemble(case, checks, params, mode, &ev, coarse, fine, corr.as_ref(), trace, notes)
}

/// Schedule-free parameters at the smallest admissible s0 (for evaluate_shifted_form).
pub fn default_params(
    curve: &PlanarCurve,
    a: f64,
    case: CaseTag,
    ratio: f64,
    nu: f64,
    g_spec: Option<CorrectorSpec>,
) -> TrialParams {
    let flat = matches!(case, CaseTag::T1a | CaseTag::T1b);
    let (s0, r0, s_hat, d_theta0) = minimal_s0(curve, a, flat);
    TrialParams { s0, s_star: s0 * ratio, nu, r0, s_hat, d_theta0, g_spec }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvegeom::{arc_bend, PieceSpec};
    use crate::profile1d::critical_coupling;
    use proptest::prelude::*;

    fn bend5() -> PlanarCurve {
        PlanarCurve::build(&[PieceSpec::Arc { length: PI, kappa: 0.5 }]).unwrap()
    }

    fn well() -> ProfilePotential {
        ProfilePotential::square_well(1.0, 1.0, 0.0).unwrap()
    }

    // double barrier around a well, tuned to its zero-energy resonance
    fn resonant(values: &[f64], v0: f64) -> ProfilePotential {
        let edges: Vec<f64> = (0..=values.len()).map(|k| -1.0 + 2.0 * k as f64 / values.len() as f64).collect();
        let shape = ProfilePotential::steps(1.0, &edges, values, v0).unwrap();
        shape.scaled(critical_coupling(&shape, 1.0, 100.0).unwrap())
    }

    fn log_quad(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
        let g = GaussRule::new(10);
        g.composite(lo.ln(), hi.ln(), 200, |u| {
            let s = u.exp();
            s * f(s)
        })
    }

    #[test]
    fn mollifier_closed_forms_match_quadrature() {
        let chi = inner_mollifier(10.0, 1e3).unwrap();
        let want = (0.1 - 1e-3) / 100f64.ln().powi(2);
        assert!((chi.half_line_deriv_norm_sq() - want).abs() < 1e-15);
        let d = log_quad(10.0, 1e3, |s| chi.deriv(s).powi(2));
        assert!((chi.half_line_deriv_norm_sq() - d).abs() < 1e-10 * d);
        assert!((chi.deriv_norm_sq() - 2.0 * d).abs() < 1e-10 * d);
        let sq = 10.0 + log_quad(10.0, 1e3, |s| chi.value(s).powi(2));
        assert!((chi.norm_sq() - 2.0 * sq).abs() < 1e-10 * sq);
        for (lo, hi) in [(0.0, 5.0), (3.0, 40.0), (20.0, 700.0), (50.0, f64::INFINITY)] {
            let q = if hi <= 10.0 {
                hi - lo
            } else {
                (10.0 - lo).max(0.0) + log_quad(lo.max(10.0), hi.min(1e3), |s| chi.value(s).powi(2))
            };
            assert!((chi.sq_integral(lo, hi) - q).abs() < 1e-10 * q.max(1.0), "{lo} {hi}");
            let qd = log_quad(lo.max(10.0), hi.min(1e3), |s| chi.deriv(s).powi(2));
            assert!((chi.deriv_sq_integral(lo, hi) - qd).abs() < 1e-10 * qd.max(1e-3), "{lo} {hi}");
        }
    }

    #[test]
    fn mollifier_rejects_bad_parameters() {
        assert!(inner_mollifier(0.0, 1.0).is_err());
        assert!(inner_mollifier(2.0, 2.0).is_err());
        assert!(inner_mollifier(1.0, f64::INFINITY).is_err());
    }

    proptest! {
        #[test]
        fn mollifier_shape(s0 in 0.1f64..100.0, r in 1.01f64..1e6, s in -1e8f64..1e8) {
            let chi = inner_mollifier(s0, s0 * r).unwrap();
            let v = chi.value(s);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!(chi.value(s.abs() * 1.1 + 1e-9) <= v + 1e-15);
            prop_assert!(chi.deriv(s) * s <= 0.0);
        }

        #[test]
        fn deriv_norm_decreases_with_the_ratio(s0 in 0.1f64..100.0, r in 1.5f64..1e8, f in 1.01f64..10.0) {
            let a = inner_mollifier(s0, s0 * r).unwrap();
            let b = inner_mollifier(s0, s0 * r * f).unwrap();
            prop_assert!(b.deriv_norm_sq() < a.deriv_norm_sq());
            let c = inner_mollifier(s0 * f, s0 * f * r).unwrap();
            prop_assert!(c.deriv_norm_sq() < a.deriv_norm_sq());
        }

        #[test]
        fn sq_integral_is_additive(s0 in 0.1f64..10.0, r in 1.5f64..1e4, x in 0.0f64..1.0, y in 0.0f64..1.0) {
            let chi = inner_mollifier(s0, s0 * r).unwrap();
            let top = 1.2 * s0 * r;
            let (p, q) = (x.min(y) * top, x.max(y) * top);
            let sum = chi.sq_integral(0.0, p) + chi.sq_integral(p, q) + chi.sq_integral(q, f64::INFINITY);
            prop_assert!((sum - chi.sq_integral(0.0, f64::INFINITY)).abs() < 1e-9 * sum);
        }
    }

    #[test]
    fn corrector_scales_with_amplitude() {
        let (c, p) = (bend5(), well());
        let mode = solve_threshold(&p).unwrap();
        let g1 = corrector_on(&c, &p, &mode, (0.2, 2.5), (0.0, 0.8), 1.0, 1.0);
        let g2 = corrector_on(&c, &p, &mode, (0.2, 2.5), (0.0, 0.8), 1.0, 2.0);
        assert!((g2.delta - 2.0 * g1.delta).abs() < 1e-13 * g1.delta.abs());
        assert!((g2.linear - 2.0 * g1.linear).abs() < 1e-13 * g1.linear.abs());
        assert!((g2.quadratic - 4.0 * g1.quadratic).abs() < 1e-13 * g1.quadratic);
        let gm = corrector_on(&c, &p, &mode, (0.2, 2.5), (0.0, 0.8), -1.0, 1.0);
        assert_eq!(gm.delta, -g1.delta);
    }

    // for g vanishing on the rectangle boundary, integrating by parts in t
    // turns the linear coefficient into 2∫∫κφ0'g = -2δ
    #[test]
    fn linear_coefficient_is_minus_two_delta() {
        for (c, p) in [(bend5(), well()), (arc_bend(0.7, PI / 3.0).unwrap(), resonant(&[2.0, -1.0, -1.0, 2.0], 0.0))] {
            let mode = solve_threshold(&p).unwrap();
            let g = choose_corrector(&c, &p, &mode).unwrap();
            assert!(g.delta > 0.0 && g.linear < 0.0 && g.quadratic > 0.0);
            assert!((g.linear + 2.0 * g.delta).abs() < 1e-9 * g.delta, "{} {}", g.linear, g.delta);
            assert!(g.linear_err < 1e-9 * g.delta);
        }
    }

    #[test]
    fn mirrored_curve_flips_the_corrector() {
        let (c, p) = (bend5(), well());
        let mode = solve_threshold(&p).unwrap();
        let g = choose_corrector(&c, &p, &mode).unwrap();
        // reflection maps (s, t) to (s, -t) and φ0 is even
        let m = c.mirrored();
        let gm = corrector_on(&m, &p, &mode, (g.s_lo, g.s_hi), (-g.t_hi, -g.t_lo), g.sign, g.amplitude);
        assert!((gm.delta - g.delta).abs() < 1e-10 * g.delta);
        assert!((gm.linear - g.linear).abs() < 1e-10 * g.delta, "{gm:?} {g:?}");
        assert!((gm.quadratic - g.quadratic).abs() < 1e-10 * g.quadratic);
        assert_eq!(gm.kappa_sign, -g.kappa_sign);
        let best = choose_corrector(&m, &p, &mode).unwrap();
        assert!((best.delta - g.delta).abs() < 1e-9 * g.delta);
    }

    #[test]
    fn straight_guide_has_nonnegative_form() {
        let c = PlanarCurve::straight_line([0.0, 0.0], 0.3);
        let p = well();
        let mode = solve_threshold(&p).unwrap();
        for ratio in [2.0, 1e2, 1e6] {
            let params = default_params(&c, 1.0, CaseTag::T2a, ratio, 0.0, None);
            let r = evaluate_shifted_form(&c, &p, &mode, &params, CaseTag::T2a).unwrap();
            assert!(r.shifted_form + r.quadrature_error_bound >= 0.0, "{}", r.shifted_form);
            // only the transverse mass times ‖χ'‖² survives
            let chi = inner_mollifier(params.s0, params.s_star).unwrap();
            let n_tot = mode.norm_sq_inner() + 2.0 * mode.phi_plus.powi(2) / (2.0 * mode.xi_plus.abs());
            let want = n_tot * chi.deriv_norm_sq();
            assert!((r.shifted_form - want).abs() < 1e-6 * want, "{} {want}", r.shifted_form);
            assert_eq!(r.verdict, Verdict::Inconclusive);
        }
    }

    fn continuity(case: CaseTag, c: &PlanarCurve, p: &ProfilePotential) {
        let mode = solve_threshold(p).unwrap();
        let params = default_params(c, p.a, case, 30.0, 0.0, None);
        let out = outer_trial(case, &mode, c, &params).unwrap();
        let chi = inner_mollifier(params.s0, params.s_star).unwrap();
        let eps = 1e-12;
        for k in 0..=60 {
            let s = -1.3 * params.s_star + 2.6 * params.s_star * k as f64 / 60.0;
            for side in [1.0, -1.0] {
                let x = c.tube_point(s, side * p.a * (1.0 + eps));
                let inner = mode.phi(side * p.a) * chi.value(s);
                let v = out.value(x);
                assert!((v - inner).abs() < 1e-9, "{case:?} s = {s} side {side}: {v} vs {inner}");
            }
        }
    }

    #[test]
    fn exterior_trial_is_continuous_across_the_strip_edge() {
        continuity(CaseTag::T2a, &bend5(), &well());
        let asym = ProfilePotential::steps(1.0, &[-1.0, 0.2, 1.0], &[-1.0, -2.0], 0.5).unwrap();
        continuity(CaseTag::T2b, &arc_bend(0.4, 1.0).unwrap(), &asym);
        continuity(CaseTag::T1a, &arc_bend(0.7, PI / 3.0).unwrap(), &resonant(&[2.0, -1.0, -1.0, 2.0], 0.0));
        continuity(CaseTag::T1b, &arc_bend(0.5, PI / 2.0).unwrap(), &resonant(&[-1.0], 0.3));
    }

    #[test]
    fn flat_side_support_is_bounded() {
        let c = arc_bend(0.7, PI / 3.0).unwrap();
        let p = resonant(&[2.0, -1.0, -1.0, 2.0], 0.0);
        let mode = solve_threshold(&p).unwrap();
        let params = default_params(&c, 1.0, CaseTag::T1a, 50.0, 0.0, None);
        let tf = trial_function(CaseTag::T1a, &mode, &c, &params).unwrap();
        let asym = c.asymptotes();
        let o = asym.origin;
        let rad = ((params.s_star - asym.c).powi(2) + 1.0).sqrt();
        for k in 0..720 {
            let th = 2.0 * PI * k as f64 / 720.0;
            let at = |r: f64| tf.value([o[0] + r * th.cos(), o[1] + r * th.sin()]);
            assert_eq!(at(rad * (1.0 + 1e-9)), 0.0);
            assert_eq!(at(3.0 * rad), 0.0);
            assert!(at(0.5 * rad).abs() > 0.0);
        }
    }

    #[test]
    fn decaying_sides_obey_the_exponential_bound() {
        let c = bend5();
        let p = well();
        let mode = solve_threshold(&p).unwrap();
        let params = default_params(&c, 1.0, CaseTag::T2a, 20.0, 0.0, None);
        let out = outer_trial(CaseTag::T2a, &mode, &c, &params).unwrap();
        let xi = mode.xi_plus.abs().min(mode.xi_minus.abs());
        let amp = mode.phi_plus.abs().max(1.0);
        for i in -40..=40 {
            for j in -40..=40 {
                let x = [i as f64 * 1.7, j as f64 * 1.3];
                let d = c.distance(x);
                if d <= 1.0 {
                    continue;
                }
                let v = out.value(x);
                assert!(v.abs() <= amp * (-xi * (d - 1.0)).exp() * (1.0 + 1e-12), "{x:?}");
            }
        }
    }

    #[test]
    fn unsupported_cases_are_reported() {
        // asymmetric resonance without bias: one turning direction breaks the sign condition
        let p = resonant(&[3.0, -1.0, -0.5, 1.0], 0.0);
        let mode = solve_threshold(&p).unwrap();
        assert_eq!(mode.kind, ModeKind::ZeroResonance);
        assert!((mode.phi_plus.powi(2) - 1.0).abs() > 1e-3);
        let outcomes: Vec<_> = [1.0, -1.0]
            .iter()
            .map(|&sg| select_case(&arc_bend(0.5, sg * PI / 3.0).unwrap(), &p, &mode).map(|r| r.0))
            .collect();
        assert!(outcomes.iter().any(|o| matches!(o, Ok(CaseTag::T1a))));
        assert!(outcomes.iter().any(|o| matches!(o, Err(Error::UnsupportedCase(_)))));
        // U-shape: the asymptotes are parallel and codirected
        let u = arc_bend(0.5, PI).unwrap();
        let w = well();
        let m = solve_threshold(&w).unwrap();
        assert!(matches!(select_case(&u, &w, &m), Err(Error::UnsupportedCase(_))));
        // strip too wide for the curvature
        let tight = arc_bend(2.0, 1.0).unwrap();
        assert!(matches!(select_case(&tight, &w, &m), Err(Error::Geometry(_))));
        // biased resonance turning towards Ω+
        let b = resonant(&[-1.0], 0.3);
        let mb = solve_threshold(&b).unwrap();
        assert!(matches!(select_case(&arc_bend(0.5, -PI / 2.0).unwrap(), &b, &mb), Err(Error::UnsupportedCase(_))));
        assert!(matches!(select_case(&arc_bend(0.5, PI / 2.0).unwrap(), &b, &mb), Ok((CaseTag::T1b, _))));
    }

    #[test]
    fn mesh_halving_is_stable() {
        let (c, p) = (bend5(), well());
        let mode = solve_threshold(&p).unwrap();
        let g = choose_corrector(&c, &p, &mode).unwrap();
        let params = default_params(&c, 1.0, CaseTag::T2a, 100.0, g.nu_hat() / 2.0, Some(g));
        let q = |panel| {
            evaluate_shifted_form_with(&c, &p, &mode, &params, CaseTag::T2a, FormOptions { panel })
                .unwrap()
                .shifted_form
        };
        let (q1, q2) = (q(0.25), q(0.125));
        assert!((q1 - q2).abs() < 0.1 * q1.abs(), "{q1} {q2}");
        assert!((q1 - q2).abs() < 1e-8, "{q1} {q2}");
    }

    #[test]
    fn case_and_mode_must_agree() {
        let (c, p) = (bend5(), well());
        let mode = solve_threshold(&p).unwrap();
        let params = default_params(&c, 1.0, CaseTag::T1a, 10.0, 0.0, None);
        assert!(matches!(outer_trial(CaseTag::T1a, &mode, &c, &params), Err(Error::Validation(_))));
        let small = TrialParams { s0: 0.5, ..params };
        assert!(evaluate_shifted_form(&c, &p, &mode, &small, CaseTag::T2a).is_err());
    }

    #[test]
    fn criterion_geometry_certifies() {
        let r = certify(&bend5(), &well(), &Budget::default()).unwrap();
        assert_eq!(r.case_tag, CaseTag::T2a);
        assert_eq!(r.verdict, Verdict::Certified);
        assert!(r.shifted_form + r.quadrature_error_bound < 0.0);
        assert!(r.continuity_mismatch < 1e-8);
        assert!(r.trace.last().unwrap().certified);
    }

    #[test]
    fn transverse_residual_bounds_long_mollifiers() {
        // the strip cost per unit length is zero only up to the accuracy of
        // φ0; past s* ~ 1/residual that error must swamp the value
        let c = arc_bend(0.7, PI / 3.0).unwrap();
        let p = resonant(&[6.0, -8.0, 6.0], 0.0);
        let mode = solve_threshold(&p).unwrap();
        let g = choose_corrector(&c, &p, &mode).unwrap();
        let at = |ratio: f64| {
            let params = default_params(&c, 1.0, CaseTag::T1a, ratio, g.nu_hat() / 2.0, Some(g.clone()));
            evaluate_shifted_form(&c, &p, &mode, &params, CaseTag::T1a).unwrap()
        };
        let (short, long) = (at(1e4), at(1e24));
        assert!(short.quadrature_error_bound < 1e-6, "{}", short.quadrature_error_bound);
        assert!(long.quadrature_error_bound > 1.0, "{}", long.quadrature_error_bound);
        assert_eq!(long.verdict, Verdict::Inconclusive);
    }
}
