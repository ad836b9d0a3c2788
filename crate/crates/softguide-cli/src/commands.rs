//! The five subcommands.  Each one builds its library objects from the run
//! configuration, writes its files into the output directory and returns the
//! typed result together with the process exit code.

use std::path::PathBuf;

use serde::Serialize;
use serde_json::json;
use softguide::arcspline::{approximate, error_norms, ArcSpline};
use softguide::certifier::{certify, CertificateReport, Verdict};
use softguide::curvegeom::{PlanarCurve, ValidityReport};
use softguide::hamiltonian2d::{required_margin, solve_spectrum, GridSpec, SpectralResult};
use softguide::profile1d::{solve_threshold, TransverseMode};

use crate::config::{RunConfig, DEFAULT_H_PER_A, DEFAULT_K};
use crate::output::{csv, eigenvector_bytes, fmt_float, OutDir};
use crate::{exit, CliError};

/// Default seed of the Lanczos start vectors.
pub const DEFAULT_SEED: u64 = 7;
/// φ0 samples written by `profile`.
pub const PROFILE_SAMPLES: usize = 401;

pub struct Context {
    pub out: OutDir,
    pub seed: u64,
    pub config_hash: String,
}

impl Context {
    pub fn new(config: &RunConfig, out: &std::path::Path, seed: u64) -> Result<Self, CliError> {
        Ok(Context { out: OutDir::create(out)?, seed, config_hash: config.hash() })
    }

    fn envelope<T: Serialize>(&self, command: &str, result: &T, extra: serde_json::Value) -> serde_json::Value {
        json!({
            "command": command,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "version": env!("CARGO_PKG_VERSION"),
            "result": result,
            "extra": extra,
        })
    }
}

/// Result of one subcommand.
pub struct Run<T> {
    pub result: T,
    pub exit: i32,
    pub files: Vec<PathBuf>,
    /// One-line human summary for stdout.
    pub summary: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct CurveMetadata {
    pub turning_angle: f64,
    pub theta0: f64,
    pub kappa_max: f64,
    pub convex_side: softguide::curvegeom::ConvexSide,
    pub curved_support: (f64, f64),
    pub asymptotes: softguide::curvegeom::Asymptotes,
}

pub fn curve_metadata(curve: &PlanarCurve) -> CurveMetadata {
    let asymptotes = curve.asymptotes().clone();
    CurveMetadata {
        turning_angle: curve.turning_angle(),
        theta0: asymptotes.theta0,
        kappa_max: curve.kappa_max(),
        convex_side: curve.convex_side(),
        curved_support: curve.curved_support(),
        asymptotes,
    }
}

pub fn cmd_validate(config: &RunConfig, ctx: &Context) -> Result<Run<ValidityReport>, CliError> {
    let curve = config.curve()?;
    let a = config.halfwidth()?;
    let report = curve.validate_strip(a)?;
    let meta = curve_metadata(&curve);
    let admissible = report.admissible();
    let extra = json!({ "admissible": admissible, "strip_ok": report.strip_ok(), "curve": meta });
    let f = ctx.out.json("validate.json", &ctx.envelope("validate", &report, extra))?;
    let summary = if admissible {
        format!("admissible: turning angle {:.6}, {:?}", meta.turning_angle, report.asymptotes)
    } else {
        let why: Vec<&str> = report.violations.iter().map(|v| v.condition.as_str()).collect();
        format!("not admissible: {}", if why.is_empty() { "separation of the arms".into() } else { why.join(", ") })
    };
    Ok(Run { exit: if admissible { exit::OK } else { exit::VALIDATION }, result: report, files: vec![f], summary })
}

pub fn cmd_profile(config: &RunConfig, ctx: &Context) -> Result<Run<TransverseMode>, CliError> {
    let (profile, coupling) = config.profile()?;
    let mode = solve_threshold(&profile)?;
    let (t, phi) = mode.samples(PROFILE_SAMPLES);
    let extra = json!({ "coupling": coupling, "samples": { "t": t, "phi": phi } });
    let f = ctx.out.json("profile.json", &ctx.envelope("profile", &mode, extra))?;
    let summary = format!("mu = {} ({:?})", fmt_float(mode.mu), mode.kind);
    Ok(Run { result: mode, exit: exit::OK, files: vec![f], summary })
}

/// Coarse grid of a spectrum run: the configured box, or the support box
/// inflated by the configured (default: required) margin.
pub fn spectrum_grid(config: &RunConfig, curve: &PlanarCurve, a: f64, mu: f64) -> Result<GridSpec, CliError> {
    let s = &config.solver;
    let h = s.h.unwrap_or(DEFAULT_H_PER_A * a);
    Ok(match s.bbox {
        Some([x0, x1, y0, y1]) => GridSpec::new(x0, x1, y0, y1, h)?,
        None => GridSpec::around(curve, a, s.margin.unwrap_or_else(|| required_margin(a, mu)), h)?,
    })
}

pub fn cmd_spectrum(config: &RunConfig, ctx: &Context) -> Result<Run<SpectralResult>, CliError> {
    let curve = config.curve()?;
    let (profile, _) = config.profile()?;
    let mu = solve_threshold(&profile)?.mu;
    let grid = spectrum_grid(config, &curve, profile.a, mu)?;
    let k = config.solver.k.unwrap_or(DEFAULT_K);
    if k == 0 {
        return Err(CliError::Config("solver.k must be at least 1".into()));
    }
    let opts = config.eigen_options(ctx.seed);
    let res = solve_spectrum(&curve, &profile, &grid, k, config.assembly()?, &opts)?;

    let rows: Vec<Vec<String>> = res
        .pairs
        .iter()
        .map(|p| vec![p.index.to_string(), fmt_float(p.eigenvalue), fmt_float(p.residual), p.below_threshold.to_string()])
        .collect();
    let mut files = vec![ctx.out.write("spectrum.csv", &csv(&["index", "eigenvalue", "residual", "below_threshold"], &rows)?)?];
    let below = res.below().count();
    let extra = json!({ "below_count": below, "eigen_options": opts, "k": k });
    files.push(ctx.out.json("spectrum.json", &ctx.envelope("spectrum", &res, extra))?);

    let g = &res.fine_grid;
    files.push(ctx.out.write("eigenvectors.bin", &eigenvector_bytes(g.nx, g.ny, res.vectors()))?);
    let sidecar = json!({
        "grid": g,
        "count": res.vectors().len(),
        "eigenvalues": res.fine.values,
        "layout": "u64 nx, u64 ny (little endian), then count vectors of nx*ny f64 little endian; entry j*nx + i is the node (x0 + (i+1) h, y0 + (j+1) h)",
        "dirichlet_boundary": true,
    });
    files.push(ctx.out.json("eigenvectors.json", &ctx.envelope("spectrum", &sidecar, json!({})))?);

    let summary = format!(
        "mu = {}, {} of {} eigenvalues below threshold{}",
        fmt_float(res.mu),
        below,
        res.pairs.len(),
        if res.converged { "" } else { " (not converged)" }
    );
    let code = if res.converged { exit::OK } else { exit::NO_CONVERGENCE };
    Ok(Run { result: res, exit: code, files, summary })
}

pub fn cmd_certify(config: &RunConfig, ctx: &Context) -> Result<Run<CertificateReport>, CliError> {
    let curve = config.curve()?;
    let (profile, coupling) = config.profile()?;
    let budget = config.budget()?;
    let report = certify(&curve, &profile, &budget)?;
    let extra = json!({ "budget": budget, "coupling": coupling, "curve": curve_metadata(&curve) });
    let f = ctx.out.json("certificate.json", &ctx.envelope("certify", &report, extra))?;
    let summary = format!(
        "{:?} ({:?}): shifted form {} with error bound {}",
        report.verdict,
        report.case_tag,
        fmt_float(report.shifted_form),
        fmt_float(report.quadrature_error_bound)
    );
    Ok(Run { result: report, exit: exit::OK, files: vec![f], summary })
}

#[derive(Clone, Debug, Serialize)]
pub struct ArcLevel {
    pub n: usize,
    pub errors: [f64; 3],
    /// |L̂ - L| / L over the curved support.
    pub length_error: f64,
    pub spline: ArcSpline,
}

#[derive(Clone, Debug, Serialize)]
pub struct ArcsResult {
    pub levels: Vec<ArcLevel>,
    /// Least-squares slopes of -log err against log n, m = 0, 1, 2.
    pub slopes: [f64; 3],
}

/// Slope of the least-squares line through (log x, log y).
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

pub fn arcs_levels(curve: &PlanarCurve, ns: &[usize]) -> Result<ArcsResult, CliError> {
    let (s0, s1) = curve.curved_support();
    let len = s1 - s0;
    let mut levels = vec![];
    for &n in ns {
        let spline = approximate(curve, n)?;
        let errors = [0, 1, 2].map(|m| error_norms(curve, &spline, m));
        let length_error = (spline.length() - len).abs() / len;
        levels.push(ArcLevel { n, errors, length_error, spline });
    }
    let x: Vec<f64> = levels.iter().map(|l| l.n as f64).collect();
    let slopes = [0, 1, 2].map(|m| {
        let y: Vec<f64> = levels.iter().map(|l| l.errors[m]).collect();
        if x.len() < 2 || y.iter().any(|&e| e.is_nan() || e <= 0.0) {
            f64::NAN
        } else {
            -loglog_slope(&x, &y)
        }
    });
    Ok(ArcsResult { levels, slopes })
}

pub fn cmd_arcs(config: &RunConfig, ctx: &Context) -> Result<Run<ArcsResult>, CliError> {
    let curve = config.curve()?;
    let ns = config.arcs_n()?;
    let res = arcs_levels(&curve, &ns)?;
    let rows: Vec<Vec<String>> = res
        .levels
        .iter()
        .map(|l| vec![l.n.to_string(), fmt_float(l.errors[0]), fmt_float(l.errors[1]), fmt_float(l.errors[2])])
        .collect();
    let mut files = vec![ctx.out.json("arcs.json", &ctx.envelope("arcs", &res, json!({})))?];
    files.push(ctx.out.write("arcs_convergence.csv", &csv(&["n", "err_m0", "err_m1", "err_m2"], &rows)?)?);
    let summary = format!("slopes m=0 {:.3}, m=1 {:.3}, m=2 {:.3}", res.slopes[0], res.slopes[1], res.slopes[2]);
    Ok(Run { result: res, exit: exit::OK, files, summary })
}

/// Certified verdict, for callers that only need the flag.
pub fn is_certified(r: &CertificateReport) -> bool {
    r.verdict == Verdict::Certified
}
