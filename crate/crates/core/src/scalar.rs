//! Scalar abstraction for the formal (coefficient) layer.
//!
//! The trans-series recursion only needs field arithmetic, so it is written once
//! over [`Scalar`] and instantiated both for `Complex<f64>` and for exact
//! complex rationals.

use std::fmt::Debug;
use std::ops::Neg;

use num::{BigInt, BigRational, Complex};
use num_traits::{FromPrimitive, Num, ToPrimitive, Zero};

/// Complex double.
pub type C64 = Complex<f64>;

/// Exact complex rational number.
pub type ExactComplex = Complex<BigRational>;

/// A complex field usable by the formal series recursion.
pub trait Scalar: Num + Clone + PartialEq + Neg<Output = Self> + Debug + Send + Sync + 'static {
    /// Converts a double-precision complex number; exact for [`ExactComplex`]
    /// (every finite double is a dyadic rational). `None` for non-finite input.
    fn from_c64(z: C64) -> Option<Self>;

    fn from_int(i: i64) -> Self;

    fn to_c64(&self) -> C64;
}

impl Scalar for C64 {
    fn from_c64(z: C64) -> Option<Self> {
        (z.re.is_finite() && z.im.is_finite()).then_some(z)
    }

    fn from_int(i: i64) -> Self {
        C64::new(i as f64, 0.0)
    }

    fn to_c64(&self) -> C64 {
        *self
    }
}

impl Scalar for ExactComplex {
    fn from_c64(z: C64) -> Option<Self> {
        Some(Complex::new(BigRational::from_float(z.re)?, BigRational::from_float(z.im)?))
    }

    fn from_int(i: i64) -> Self {
        Complex::new(BigRational::from_integer(BigInt::from(i)), BigRational::zero())
    }

    fn to_c64(&self) -> C64 {
        C64::new(self.re.to_f64().unwrap_or(f64::NAN), self.im.to_f64().unwrap_or(f64::NAN))
    }
}

/// Exact rational `num/den` as an [`ExactComplex`].
pub fn exact_ratio(num: i64, den: i64) -> ExactComplex {
    Complex::new(BigRational::new(BigInt::from(num), BigInt::from(den)), BigRational::zero())
}

/// `true` when `z` is a real integer `<= 0` (a pole of Gamma).
pub fn is_nonpositive_integer(z: C64) -> bool {
    z.im == 0.0 && z.re <= 0.0 && z.re.fract() == 0.0
}

/// Converts an `f64` to `BigRational` exactly, panicking on non-finite input.
pub fn rational(x: f64) -> BigRational {
    BigRational::from_f64(x).expect("finite value")
}
