//! Run configuration (TOML) and its conversion into library objects.
//!
//! ```toml
//! normalized = false          # lengths in units of the halfwidth a
//!
//! [geometry]
//! start = [0.0, 0.0]
//! heading = 0.0
//! pieces = [
//!   { type = "straight", length = 1.0 },
//!   { type = "arc", length = 3.14159, kappa = 0.5 },
//!   { type = "poly", length = 1.0, coeffs = [0.0, 0.8] },
//! ]
//! # straight = true selects the κ ≡ 0 control instead of pieces
//!
//! [profile]
//! a = 1.0
//! v0 = 0.0
//! symmetric = true
//! pieces = [{ lo = -1.0, hi = 1.0, value = -1.0 }]   # or coeffs = [...]
//! # tune = "critical" rescales v to its critical coupling
//!
//! [solver]       # h, k, margin, box, subsamples, lanczos_steps, max_restarts, tol
//! [certifier]    # s0_doublings, ratios, flat_ratios, nu_levels, panel
//! [arcs]         # n = [4, 8, 16, 32, 64]
//! [output]       # dir
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use softguide::certifier::Budget;
use softguide::curvegeom::{PieceSpec, PlanarCurve};
use softguide::hamiltonian2d::{AssemblyOptions, EigenOptions};
use softguide::profile1d::{critical_coupling, ProfilePotential, VPiece};

use crate::CliError;

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub normalized: bool,
    pub geometry: Option<GeometryBlock>,
    pub profile: Option<ProfileBlock>,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub certifier: CertifierBlock,
    #[serde(default)]
    pub arcs: ArcsBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryBlock {
    #[serde(default)]
    pub straight: bool,
    pub start: Option<[f64; 2]>,
    pub heading: Option<f64>,
    #[serde(default)]
    pub pieces: Vec<PieceConfig>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum PieceConfig {
    Straight { length: f64 },
    Arc { length: f64, kappa: f64 },
    Poly { length: f64, coeffs: Vec<f64> },
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileBlock {
    pub a: Option<f64>,
    #[serde(default)]
    pub v0: f64,
    #[serde(default)]
    pub symmetric: bool,
    #[serde(default)]
    pub pieces: Vec<ProfilePieceConfig>,
    /// "critical": multiply v by the coupling at which a bound state appears.
    pub tune: Option<String>,
    /// Upper end of the coupling search.
    pub tune_max: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProfilePieceConfig {
    pub lo: f64,
    pub hi: f64,
    pub value: Option<f64>,
    pub coeffs: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    pub h: Option<f64>,
    pub k: Option<usize>,
    pub margin: Option<f64>,
    #[serde(rename = "box")]
    pub bbox: Option<[f64; 4]>,
    pub subsamples: Option<usize>,
    pub lanczos_steps: Option<usize>,
    pub max_restarts: Option<usize>,
    pub tol: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CertifierBlock {
    pub s0_doublings: Option<usize>,
    pub ratios: Option<Vec<f64>>,
    pub flat_ratios: Option<Vec<f64>>,
    pub nu_levels: Option<usize>,
    pub panel: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ArcsBlock {
    pub n: Option<Vec<usize>>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: Option<String>,
}

/// Default number of eigenpairs and the base grid step in units of a.
pub const DEFAULT_K: usize = 3;
pub const DEFAULT_H_PER_A: f64 = 0.1;
pub const DEFAULT_ARCS_N: [usize; 5] = [4, 8, 16, 32, 64];

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl std::str::FromStr for RunConfig {
    type Err = CliError;

    fn from_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| invalid(format!("cannot parse configuration: {e}")))
    }
}

impl RunConfig {

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read configuration {}: {e}", path.display())))?;
        text.parse()
    }

    /// SHA-256 of the canonical JSON form of the parsed configuration.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_vec(self).expect("configuration serializes");
        Sha256::digest(&canon).iter().map(|b| format!("{b:02x}")).collect()
    }

    fn geometry_block(&self) -> Result<&GeometryBlock, CliError> {
        self.geometry.as_ref().ok_or_else(|| invalid("missing table [geometry]"))
    }

    fn profile_block(&self) -> Result<&ProfileBlock, CliError> {
        self.profile.as_ref().ok_or_else(|| invalid("missing table [profile]"))
    }

    pub fn halfwidth(&self) -> Result<f64, CliError> {
        self.profile_block()?.a.ok_or_else(|| invalid("missing key profile.a"))
    }

    // length unit applied to geometry and profile intervals
    fn unit(&self) -> Result<f64, CliError> {
        if self.normalized {
            self.halfwidth()
        } else {
            Ok(1.0)
        }
    }

    pub fn curve(&self) -> Result<PlanarCurve, CliError> {
        let g = self.geometry_block()?;
        let u = self.unit()?;
        let start = g.start.unwrap_or([0.0, 0.0]);
        let start = [start[0] * u, start[1] * u];
        let heading = g.heading.unwrap_or(0.0);
        if g.straight {
            if !g.pieces.is_empty() {
                return Err(invalid("geometry.straight = true excludes geometry.pieces"));
            }
            return Ok(PlanarCurve::straight_line(start, heading));
        }
        if g.pieces.is_empty() {
            return Err(invalid("missing key geometry.pieces (or geometry.straight = true)"));
        }
        let specs: Vec<PieceSpec> = g
            .pieces
            .iter()
            .map(|p| match p {
                PieceConfig::Straight { length } => PieceSpec::Straight { length: length * u },
                PieceConfig::Arc { length, kappa } => PieceSpec::Arc { length: length * u, kappa: kappa / u },
                // κ(σ) = Σ c_k (σ/u)^k / u for the physical arc length σ
                PieceConfig::Poly { length, coeffs } => PieceSpec::Poly {
                    length: length * u,
                    coeffs: coeffs.iter().enumerate().map(|(k, c)| c / u.powi(k as i32 + 1)).collect(),
                },
            })
            .collect();
        Ok(PlanarCurve::build_with(&specs, start, heading)?)
    }

    /// Profile as written, before any tuning.
    pub fn raw_profile(&self) -> Result<ProfilePotential, CliError> {
        let p = self.profile_block()?;
        let a = self.halfwidth()?;
        let u = self.unit()?;
        let mut pieces = vec![];
        for (i, q) in p.pieces.iter().enumerate() {
            let coeffs = match (&q.value, &q.coeffs) {
                (Some(v), None) => vec![*v],
                (None, Some(c)) => c.iter().enumerate().map(|(k, c)| c / u.powi(k as i32)).collect(),
                _ => return Err(invalid(format!("profile.pieces[{i}] needs exactly one of `value` or `coeffs`"))),
            };
            pieces.push(VPiece { lo: q.lo * u, hi: q.hi * u, coeffs });
        }
        Ok(ProfilePotential::new(a, pieces, p.v0)?.with_symmetric(p.symmetric)?)
    }

    /// Profile after tuning, and the coupling applied (1 without tuning).
    pub fn profile(&self) -> Result<(ProfilePotential, f64), CliError> {
        let p = self.profile_block()?;
        let raw = self.raw_profile()?;
        match p.tune.as_deref() {
            None => Ok((raw, 1.0)),
            Some("critical") => {
                let lam = critical_coupling(&raw, 1.0, p.tune_max.unwrap_or(100.0))?;
                Ok((raw.scaled(lam), lam))
            }
            Some(other) => Err(invalid(format!("profile.tune = \"{other}\" is not supported (use \"critical\")"))),
        }
    }

    pub fn budget(&self) -> Result<Budget, CliError> {
        let c = &self.certifier;
        let d = Budget::default();
        let b = Budget {
            s0_doublings: c.s0_doublings.unwrap_or(d.s0_doublings),
            ratios: c.ratios.clone().unwrap_or(d.ratios),
            flat_ratios: c.flat_ratios.clone().unwrap_or(d.flat_ratios),
            nu_levels: c.nu_levels.unwrap_or(d.nu_levels),
            panel: c.panel.unwrap_or(d.panel),
        };
        if b.ratios.iter().chain(&b.flat_ratios).any(|&r| r.is_nan() || r <= 1.0) {
            return Err(invalid("certifier ratios must exceed 1"));
        }
        if b.panel.is_nan() || b.panel <= 0.0 {
            return Err(invalid("certifier.panel must be positive"));
        }
        Ok(b)
    }

    pub fn assembly(&self) -> Result<AssemblyOptions, CliError> {
        let sub = self.solver.subsamples.unwrap_or(AssemblyOptions::default().subsamples);
        if sub == 0 {
            return Err(invalid("solver.subsamples must be at least 1"));
        }
        Ok(AssemblyOptions { subsamples: sub, check_box: self.solver.bbox.is_none() })
    }

    pub fn eigen_options(&self, seed: u64) -> EigenOptions {
        let d = EigenOptions::default();
        EigenOptions {
            lanczos_steps: self.solver.lanczos_steps.unwrap_or(d.lanczos_steps),
            max_restarts: self.solver.max_restarts.unwrap_or(d.max_restarts),
            tol: self.solver.tol.unwrap_or(d.tol),
            seed,
            ..d
        }
    }

    pub fn arcs_n(&self) -> Result<Vec<usize>, CliError> {
        let n = self.arcs.n.clone().unwrap_or_else(|| DEFAULT_ARCS_N.to_vec());
        if n.is_empty() || n.contains(&0) {
            return Err(invalid("arcs.n must list positive subdivision counts"));
        }
        Ok(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BEND: &str = r#"
        [geometry]
        pieces = [{ type = "arc", length = 3.141592653589793, kappa = 0.5 }]
        [profile]
        a = 1.0
        symmetric = true
        pieces = [{ lo = -1.0, hi = 1.0, value = -1.0 }]
    "#;

    #[test]
    fn parses_and_builds() {
        let c = BEND.parse::<RunConfig>().unwrap();
        let curve = c.curve().unwrap();
        assert!((curve.turning_angle() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        let (p, lam) = c.profile().unwrap();
        assert_eq!(lam, 1.0);
        assert!(p.symmetric && p.v(0.3) == -1.0);
        assert_eq!(c.budget().unwrap().ratios, Budget::default().ratios);
    }

    #[test]
    fn missing_blocks_name_the_key() {
        let c = "[profile]\na = 1.0\n".parse::<RunConfig>().unwrap();
        let e = c.curve().unwrap_err().to_string();
        assert!(e.contains("[geometry]"), "{e}");
        let c = "[geometry]\nstraight = true\n[profile]\n".parse::<RunConfig>().unwrap();
        assert!(c.raw_profile().unwrap_err().to_string().contains("profile.a"));
        assert!("[geometry]\nbogus = 1\n".parse::<RunConfig>().is_err());
    }

    #[test]
    fn normalized_lengths_scale_with_a() {
        let text = BEND.replace("a = 1.0", "a = 2.0").replace("[geometry]", "normalized = true\n[geometry]");
        let c = text.parse::<RunConfig>().unwrap();
        let curve = c.curve().unwrap();
        // same turning angle, twice the radius
        assert!((curve.turning_angle() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!((curve.kappa(1.0) - 0.25).abs() < 1e-15);
        let p = c.raw_profile().unwrap();
        assert_eq!(p.pieces[0].lo, -2.0);
    }

    #[test]
    fn hash_tracks_content() {
        let a = BEND.parse::<RunConfig>().unwrap();
        let b = BEND.replace("0.5", "0.25").parse::<RunConfig>().unwrap();
        assert_eq!(a.hash(), BEND.parse::<RunConfig>().unwrap().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
