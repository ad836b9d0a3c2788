//! Bound states of soft quantum waveguides: transverse profile analysis,
//! curve geometry, arc-spline approximation, a finite-difference solver for
//! the planar operator and a variational existence certifier.

pub mod arcspline;
pub mod certifier;
pub mod curvegeom;
pub mod dst;
pub mod error;
pub mod hamiltonian2d;
pub mod profile1d;
pub mod quad;

pub use error::{Error, Result};
