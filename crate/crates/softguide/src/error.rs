use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("solver did not converge: {msg} (bracket [{lo:e}, {hi:e}])")]
    NoConvergence { msg: String, lo: f64, hi: f64 },

    #[error("critical window: ground energy {e0:e} within tolerance of zero, scaled-operator probe gave {e_scaled:e}; tighten the tolerance or retune the profile")]
    CriticalWindow { e0: f64, e_scaled: f64 },

    #[error("integration failed: {0}")]
    Integration(String),

    #[error("geometry rejected: {0}")]
    Geometry(String),

    #[error("grid too coarse: step {h} exceeds the required {required}")]
    GridTooCoarse { h: f64, required: f64 },

    #[error("refinement requested: {0}")]
    Refine(String),

    #[error("unsupported case: {0}")]
    UnsupportedCase(String),

    #[error("internal consistency: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
