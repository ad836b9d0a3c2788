//! Finite-difference discretization of H = -Δ + V on a Dirichlet box and
//! shift-invert Lanczos for the eigenvalues just below the threshold μ.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::curvegeom::{PlanarCurve, Point, Region};
use crate::dst::FastPoisson;
use crate::error::{Error, Result};
use crate::profile1d::{solve_threshold, ProfilePotential};

fn is_smooth(mut n: usize) -> bool {
    for p in [2, 3, 5, 7] {
        while n.is_multiple_of(p) {
            n /= p;
        }
    }
    n == 1
}

fn next_smooth(n: usize) -> usize {
    (n.max(2)..).find(|&m| is_smooth(m)).unwrap()
}

/// Uniform grid on a box; nodes on the boundary carry the Dirichlet data, so
/// the unknowns are the nx × ny interior nodes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridSpec {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    /// Grid of step h covering the box; each side grows symmetrically until the
    /// interval count is 7-smooth so the sine transforms stay fast.
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64, h: f64) -> Result<Self> {
        if !(h > 0.0 && x1 > x0 && y1 > y0) {
            return Err(Error::Validation("grid needs h > 0 and a nonempty box".into()));
        }
        let fit = |lo: f64, hi: f64| {
            let n = next_smooth(((hi - lo) / h - 1e-9).ceil() as usize);
            let grow = 0.5 * (n as f64 * h - (hi - lo));
            (lo - grow, lo - grow + n as f64 * h, n)
        };
        let (x0, x1, nx) = fit(x0, x1);
        let (y0, y1, ny) = fit(y0, y1);
        Ok(GridSpec { x0, x1, y0, y1, h, nx: nx - 1, ny: ny - 1 })
    }

    /// Same box at half the step.
    pub fn refined(&self) -> Self {
        GridSpec { h: 0.5 * self.h, nx: 2 * self.nx + 1, ny: 2 * self.ny + 1, ..self.clone() }
    }

    pub fn dim(&self) -> usize {
        self.nx * self.ny
    }

    pub fn node(&self, i: usize, j: usize) -> Point {
        [self.x0 + self.h * (i + 1) as f64, self.y0 + self.h * (j + 1) as f64]
    }

    /// Box around the curved support inflated by `margin` on every side.
    pub fn around(curve: &PlanarCurve, a: f64, margin: f64, h: f64) -> Result<Self> {
        let (lo, hi) = support_box(curve, a);
        Self::new(lo[0] - margin, hi[0] + margin, lo[1] - margin, hi[1] + margin, h)
    }
}

/// Bounding box of the strip over the curved support.
pub fn support_box(curve: &PlanarCurve, a: f64) -> (Point, Point) {
    let (s0, s1) = curve.curved_support();
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let n = 400;
    for k in 0..=n {
        let s = s0 + (s1 - s0) * k as f64 / n as f64;
        for t in [-a, 0.0, a] {
            let p = curve.tube_point(s, t);
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
    }
    (lo, hi)
}

/// Required inflation of the support box: max(5/√|μ|, 10a), or 10a at μ = 0.
pub fn required_margin(a: f64, mu: f64) -> f64 {
    if mu < 0.0 {
        (5.0 / mu.abs().sqrt()).max(10.0 * a)
    } else {
        10.0 * a
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct AssemblyOptions {
    /// Subsamples per cell side for the potential; 1 samples at the node.
    pub subsamples: usize,
    /// Skip the box-size check (tests on deliberately small boxes).
    pub check_box: bool,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        AssemblyOptions { subsamples: 4, check_box: true }
    }
}

/// Matrix-free 5-point Laplacian plus diagonal potential.
#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    pub grid: GridSpec,
    pub potential: Vec<f64>,
    pub subsamples: usize,
    inv_h2: f64,
}

/// V at a point: v(t) in the strip, V0 on the plus side outside it, else 0.
pub fn potential_at(curve: &PlanarCurve, profile: &ProfilePotential, x: Point) -> Result<f64> {
    Ok(match curve.classify_region(profile.a, x)? {
        Region::Strip { t, .. } => profile.v(t),
        Region::OmegaPlusOut => profile.v0,
        Region::OmegaMinusOut => 0.0,
    })
}

pub fn assemble(
    curve: &PlanarCurve,
    profile: &ProfilePotential,
    grid: &GridSpec,
    mu: f64,
    opts: AssemblyOptions,
) -> Result<DiscreteOperator> {
    let a = profile.a;
    if grid.h > a / 10.0 {
        return Err(Error::GridTooCoarse { h: grid.h, required: a / 10.0 });
    }
    if opts.check_box && !curve.is_straight() {
        let (lo, hi) = support_box(curve, a);
        let m = required_margin(a, mu);
        if lo[0] - m < grid.x0 || hi[0] + m > grid.x1 || lo[1] - m < grid.y0 || hi[1] + m > grid.y1 {
            return Err(Error::Validation(format!(
                "box [{}, {}] x [{}, {}] does not contain the curved support inflated by {m}",
                grid.x0, grid.x1, grid.y0, grid.y1
            )));
        }
    }
    let m = opts.subsamples.max(1);
    let offs: Vec<f64> = (0..m).map(|p| ((p as f64 + 0.5) / m as f64 - 0.5) * grid.h).collect();
    let mut potential = vec![0.0; grid.dim()];
    let nx = grid.nx;
    potential
        .par_chunks_mut(nx)
        .enumerate()
        .try_for_each(|(j, row)| -> Result<()> {
            for (i, v) in row.iter_mut().enumerate() {
                let c = grid.node(i, j);
                let mut acc = 0.0;
                for &dy in &offs {
                    for &dx in &offs {
                        acc += potential_at(curve, profile, [c[0] + dx, c[1] + dy])?;
                    }
                }
                *v = acc / (m * m) as f64;
            }
            Ok(())
        })?;
    Ok(DiscreteOperator { grid: grid.clone(), potential, subsamples: m, inv_h2: 1.0 / (grid.h * grid.h) })
}

impl DiscreteOperator {
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// y = A x.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.apply_shifted(x, y, 0.0)
    }

    /// y = (A - σ) x.
    pub fn apply_shifted(&self, x: &[f64], y: &mut [f64], sigma: f64) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let c = self.inv_h2;
        y.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
            let base = j * nx;
            #[allow(clippy::needless_range_loop)]
            for i in 0..nx {
                let k = base + i;
                let mut nb = 0.0;
                if i > 0 {
                    nb += x[k - 1];
                }
                if i + 1 < nx {
                    nb += x[k + 1];
                }
                if j > 0 {
                    nb += x[k - nx];
                }
                if j + 1 < ny {
                    nb += x[k + nx];
                }
                row[i] = c * (4.0 * x[k] - nb) + (self.potential[k] - sigma) * x[k];
            }
        });
    }

    pub fn max_potential(&self) -> f64 {
        self.potential.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn dotp(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += alpha * x);
}

enum SolveError {
    Indefinite,
    Stalled(f64),
}

/// PCG for (A - σ) x = b preconditioned by the exact inverse of (-Δ_h + c).
struct ShiftedSolver<'a> {
    op: &'a DiscreteOperator,
    sigma: f64,
    pre: FastPoisson,
    tol: f64,
    max_iter: usize,
    iterations: usize,
}

impl<'a> ShiftedSolver<'a> {
    fn new(op: &'a DiscreteOperator, sigma: f64, tol: f64) -> Self {
        let c = (op.max_potential() - sigma).max(1e-3);
        let pre = FastPoisson::new(op.grid.nx, op.grid.ny, op.grid.h, c);
        ShiftedSolver { op, sigma, pre, tol, max_iter: 2000, iterations: 0 }
    }

    fn solve(&mut self, b: &[f64], x: &mut [f64]) -> std::result::Result<(), SolveError> {
        let n = b.len();
        let mut r = b.to_vec();
        let mut z = vec![0.0; n];
        let mut work = vec![0.0; n];
        let mut q = vec![0.0; n];
        x.iter_mut().for_each(|v| *v = 0.0);
        let bn = dotp(b, b).sqrt();
        if bn == 0.0 {
            return Ok(());
        }
        self.pre.solve(&r, &mut z, &mut work);
        let mut p = z.clone();
        let mut rz = dotp(&r, &z);
        for _ in 0..self.max_iter {
            self.iterations += 1;
            self.op.apply_shifted(&p, &mut q, self.sigma);
            let pq = dotp(&p, &q);
            if pq <= 0.0 {
                return Err(SolveError::Indefinite);
            }
            let alpha = rz / pq;
            axpy(alpha, &p, x);
            axpy(-alpha, &q, &mut r);
            let rn = dotp(&r, &r).sqrt();
            if rn <= self.tol * bn {
                return Ok(());
            }
            self.pre.solve(&r, &mut z, &mut work);
            let rz_new = dotp(&r, &z);
            if rz_new <= 0.0 {
                return Err(SolveError::Indefinite);
            }
            let beta = rz_new / rz;
            rz = rz_new;
            p.iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
        }
        let rn = dotp(&r, &r).sqrt();
        Err(SolveError::Stalled(rn / bn))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenOptions {
    pub lanczos_steps: usize,
    pub max_restarts: usize,
    /// Target for ‖Aψ - Eψ‖/‖ψ‖.
    pub tol: f64,
    /// Relative tolerance of the inner CG solves.
    pub inner_tol: f64,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions { lanczos_steps: 60, max_restarts: 8, tol: 1e-8, inner_tol: 1e-12, seed: 7 }
    }
}

/// Eigenpairs of one discretization.
#[derive(Clone, Debug, Serialize)]
pub struct GridEigen {
    pub values: Vec<f64>,
    pub residuals: Vec<f64>,
    #[serde(skip)]
    pub vectors: Vec<Vec<f64>>,
    pub converged: bool,
    pub sigma: f64,
    pub lanczos_steps: usize,
    pub inner_iterations: usize,
    pub diagnostics: Vec<String>,
}

/// Shift for the inverse iteration: μ - max(|μ|/2, 10·err), kept at least
/// 0.05/a² below μ so a resonance threshold still gets a gap.
pub fn default_shift(mu: f64, err: f64, a: f64) -> f64 {
    mu - (0.5 * mu.abs()).max(10.0 * err).max(0.05 / (a * a))
}

/// k eigenpairs of A nearest above σ by shift-invert Lanczos with full
/// reorthogonalization and explicit restarts.
pub fn lowest_eigenpairs(op: &DiscreteOperator, k: usize, sigma: f64, opts: &EigenOptions) -> Result<GridEigen> {
    if k == 0 {
        return Err(Error::Validation("k must be at least 1".into()));
    }
    let n = op.dim();
    let k = k.min(n);
    let mut sigma = sigma;
    let mut diagnostics = vec![];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut start: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
    let mut total_steps = 0;
    let mut inner = 0;
    'shift: for attempt in 0..6 {
        let mut solver = ShiftedSolver::new(op, sigma, opts.inner_tol);
        let m = opts.lanczos_steps.max(2 * k + 10).min(n);
        let mut best: Option<GridEigen> = None;
        for restart in 0..=opts.max_restarts {
            let nv = dotp(&start, &start).sqrt();
            let mut basis: Vec<Vec<f64>> = vec![start.iter().map(|v| v / nv).collect()];
            let mut alpha = vec![];
            let mut beta: Vec<f64> = vec![];
            let mut w = vec![0.0; n];
            let mut done = false;
            let mut result: Option<GridEigen> = None;
            for j in 0..m {
                match solver.solve(&basis[j], &mut w) {
                    Ok(()) => {}
                    Err(SolveError::Indefinite) => {
                        diagnostics.push(format!("shift {sigma} lies above an eigenvalue; lowering it"));
                        sigma -= (0.5 * sigma.abs()).max(0.1);
                        inner += solver.iterations;
                        let _ = attempt;
                        continue 'shift;
                    }
                    Err(SolveError::Stalled(r)) => {
                        diagnostics.push(format!("inner solve stalled at relative residual {r:e}"));
                    }
                }
                total_steps += 1;
                let a = dotp(&basis[j], &w);
                alpha.push(a);
                for _ in 0..2 {
                    for v in &basis {
                        let c = dotp(v, &w);
                        axpy(-c, v, &mut w);
                    }
                }
                let b = dotp(&w, &w).sqrt();
                let steps = alpha.len();
                let check = steps >= k && (steps % 5 == 0 || steps == m || b < 1e-14 * a.abs());
                if check {
                    let (vals, vecs, est) = ritz(&alpha, &beta, b, k);
                    let converged_est = est.iter().zip(&vals).all(|(e, t)| *e <= 1e-9 * t.abs());
                    if converged_est || steps == m || b < 1e-14 * a.abs() {
                        let ge = assemble_ritz(op, &basis, &vals, &vecs, sigma);
                        let ok = ge.iter().all(|(_, _, r)| *r < opts.tol);
                        let cand = GridEigen {
                            values: ge.iter().map(|g| g.0).collect(),
                            residuals: ge.iter().map(|g| g.2).collect(),
                            vectors: ge.into_iter().map(|g| g.1).collect(),
                            converged: ok,
                            sigma,
                            lanczos_steps: 0,
                            inner_iterations: 0,
                            diagnostics: vec![],
                        };
                        if ok || steps == m || b < 1e-14 * a.abs() {
                            done = ok;
                            result = Some(cand);
                            break;
                        }
                    }
                }
                if b < 1e-14 * a.abs() {
                    break;
                }
                beta.push(b);
                basis.push(w.iter().map(|v| v / b).collect());
            }
            inner += solver.iterations;
            solver.iterations = 0;
            if let Some(r) = result {
                // restart from the sum of the wanted Ritz vectors
                start = vec![0.0; n];
                for v in &r.vectors {
                    axpy(1.0, v, &mut start);
                }
                let better = best.as_ref().is_none_or(|b| {
                    r.residuals.iter().cloned().fold(0.0, f64::max) < b.residuals.iter().cloned().fold(0.0, f64::max)
                });
                if better {
                    best = Some(r);
                }
            }
            if done {
                break;
            }
            if restart == opts.max_restarts {
                diagnostics.push("restart budget exhausted before all residuals met the target".into());
            }
        }
        let mut g = best.ok_or_else(|| Error::NoConvergence { msg: "Lanczos produced no Ritz pairs".into(), lo: sigma, hi: sigma })?;
        g.lanczos_steps = total_steps;
        g.inner_iterations = inner;
        g.diagnostics = diagnostics;
        return Ok(g);
    }
    Err(Error::NoConvergence { msg: "could not place the shift below the spectrum".into(), lo: sigma, hi: sigma })
}

// top-k Ritz pairs of the Lanczos tridiagonal: (θ, coefficient vectors, β|s_m|)
fn ritz(alpha: &[f64], beta: &[f64], b_last: f64, k: usize) -> (Vec<f64>, Vec<Vec<f64>>, Vec<f64>) {
    let m = alpha.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&p, &q| eig.eigenvalues[q].partial_cmp(&eig.eigenvalues[p]).unwrap());
    let take = k.min(m);
    let vals = idx[..take].iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = idx[..take].iter().map(|&i| eig.eigenvectors.column(i).iter().cloned().collect()).collect();
    let est = idx[..take].iter().map(|&i| (b_last * eig.eigenvectors[(m - 1, i)]).abs()).collect();
    (vals, vecs, est)
}

// Ritz vectors, eigenvalue by Rayleigh quotient on A, true residual; sorted by E
fn assemble_ritz(
    op: &DiscreteOperator,
    basis: &[Vec<f64>],
    vals: &[f64],
    vecs: &[Vec<f64>],
    _sigma: f64,
) -> Vec<(f64, Vec<f64>, f64)> {
    let n = op.dim();
    let mut out: Vec<(f64, Vec<f64>, f64)> = vals
        .iter()
        .zip(vecs)
        .map(|(_, s)| {
            let mut y = vec![0.0; n];
            for (c, v) in s.iter().zip(basis) {
                axpy(*c, v, &mut y);
            }
            let nrm = dotp(&y, &y).sqrt();
            y.iter_mut().for_each(|v| *v /= nrm);
            let mut ay = vec![0.0; n];
            op.apply(&y, &mut ay);
            let e = dotp(&y, &ay);
            axpy(-e, &y, &mut ay);
            let res = dotp(&ay, &ay).sqrt();
            (e, y, res)
        })
        .collect();
    out.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenPair {
    pub index: usize,
    /// Fine-grid eigenvalue.
    pub eigenvalue: f64,
    pub coarse: f64,
    /// |E_h - E_{h/2}| / 3.
    pub error_estimate: f64,
    pub extrapolated: f64,
    pub residual: f64,
    pub below_threshold: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralResult {
    pub mu: f64,
    pub pairs: Vec<EigenPair>,
    pub coarse_grid: GridSpec,
    pub fine_grid: GridSpec,
    pub subsamples: usize,
    pub converged: bool,
    pub coarse: GridEigen,
    pub fine: GridEigen,
}

impl SpectralResult {
    pub fn below(&self) -> impl Iterator<Item = &EigenPair> {
        self.pairs.iter().filter(|p| p.below_threshold)
    }

    /// Fine-grid eigenvectors, row-major over the fine grid.
    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.fine.vectors
    }
}

/// μ = inf σ(h) of the transverse operator.
pub fn threshold(profile: &ProfilePotential) -> Result<f64> {
    Ok(solve_threshold(profile)?.mu)
}

/// Eigenvalues on grids h and h/2 with Richardson error estimates.
pub fn solve_spectrum(
    curve: &PlanarCurve,
    profile: &ProfilePotential,
    grid: &GridSpec,
    k: usize,
    assembly: AssemblyOptions,
    opts: &EigenOptions,
) -> Result<SpectralResult> {
    let mu = threshold(profile)?;
    let fine_grid = grid.refined();
    let sigma = default_shift(mu, 0.0, profile.a);
    let op_c = assemble(curve, profile, grid, mu, assembly)?;
    let coarse = lowest_eigenpairs(&op_c, k, sigma, opts)?;
    drop(op_c);
    let op_f = assemble(curve, profile, &fine_grid, mu, assembly)?;
    let fine = lowest_eigenpairs(&op_f, k, coarse.sigma.min(sigma), opts)?;
    let pairs = fine
        .values
        .iter()
        .zip(&coarse.values)
        .enumerate()
        .map(|(i, (&ef, &ec))| {
            let err = (ec - ef).abs() / 3.0;
            EigenPair {
                index: i,
                eigenvalue: ef,
                coarse: ec,
                error_estimate: err,
                extrapolated: ef - (ec - ef) / 3.0,
                residual: fine.residuals[i],
                below_threshold: ef < mu - err,
            }
        })
        .collect();
    Ok(SpectralResult {
        mu,
        pairs,
        coarse_grid: grid.clone(),
        fine_grid,
        subsamples: assembly.subsamples,
        converged: coarse.converged && fine.converged,
        coarse,
        fine,
    })
}
