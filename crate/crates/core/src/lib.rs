//! Trans-series, Borel-plane convolution solvers, Stokes constants and Laplace
//! resummation for rank-one ODE systems with an irregular singular point at infinity.

pub mod borel;
pub mod branch;
pub mod cases;
pub mod error;
pub mod grid;
pub mod laplace;
pub mod quadrature;
pub mod resurgence;
pub mod scalar;
pub mod series;
pub mod special;
pub mod system;
pub mod volterra;

pub use error::{Error, Result};
pub use scalar::{ExactComplex, Scalar, C64};
pub use system::{load_system, validate_system, SystemSpec};

/// Double-precision trans-series.
pub type TransSeries64 = series::TransSeries<C64>;
/// Exact complex-rational trans-series.
pub type ExactTransSeries = series::TransSeries<ExactComplex>;
/// Double-precision formal series.
pub type FormalSeries64 = series::FormalSeries<C64>;
