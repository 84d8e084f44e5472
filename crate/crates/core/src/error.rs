//! Error type shared by every module of the crate.

use thiserror::Error;

/// Everything that can go wrong while loading a system or computing with it.
///
/// Variants are split into *validation* failures (bad input) and *numerical*
/// failures (a computation could not meet its contract); see [`Error::is_validation`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("config parse error: {0}")]
    Parse(String),

    #[error("invalid system: {}", .0.join("; "))]
    InvalidSystem(Vec<String>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("resonance at level k = {k}: Lambda - k is singular in component {component}")]
    Resonance { k: usize, component: usize },

    #[error("series term x^-({power}) has no Borel function (Dirac mass at p = 0)")]
    DiracTerm { power: String },

    #[error("evaluation at |p| = {modulus:.6} outside the trusted disk (radius estimate {radius:.6})")]
    OutsideDisk { modulus: f64, radius: f64 },

    #[error("non-integrable singular exponent {exponent} at p = {location}")]
    NonIntegrable { location: f64, exponent: String },

    #[error("marching failed to converge at p = {p}")]
    NonConvergence { p: String },

    #[error("node p = {p} collides with an eigenvalue ray")]
    EigenRayCollision { p: String },

    #[error("missing levels: need Y_k for k in {required:?}")]
    MissingLevels { required: Vec<usize> },

    #[error("x = {x} outside the half-plane of convergence (Re(x e^(i phi)) must exceed {bound})")]
    OutsideHalfPlane { x: String, bound: f64 },

    #[error("at x = {x}: truncation tail bound {bound:e} exceeds tolerance {tol:e}")]
    TailTooLarge { x: String, bound: f64, tol: f64 },

    #[error("ODE integration failed: {0}")]
    Ode(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("unknown case '{0}'")]
    UnknownCase(String),
}

impl Error {
    /// `true` for errors caused by invalid input rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Parse(_) | Error::InvalidSystem(_) | Error::InvalidArgument(_) | Error::UnknownCase(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
