//! Scalar abstractions.
//!
//! Lattice algebra (conditional expectations, brackets, orthogonal
//! projections) only needs field operations, so it is written against
//! [`Scalar`], which exact rationals implement. Path metrics and Young
//! functions need `sqrt`, `powf` and friends and use [`Real`].

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::Neg;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, FromPrimitive, Num, Signed, ToPrimitive, Zero};

/// Field-like scalar used by the finite-lattice machinery.
pub trait Scalar:
    Clone + Debug + PartialOrd + Num + Neg<Output = Self> + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    fn abs_val(&self) -> Self;

    /// Whether `self` vanishes up to an absolute tolerance. Exact types
    /// ignore `tol` and test for zero.
    fn within(&self, tol: f64) -> bool;

    /// Whether `self` is numerically zero next to a reference magnitude.
    /// Used to detect rank deficiency in small Gram systems.
    fn negligible_against(&self, scale: &Self) -> bool;

    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("finite value")
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn max_of(a: Self, b: Self) -> Self {
        if a >= b {
            a
        } else {
            b
        }
    }
}

macro_rules! impl_float_scalar {
    ($t:ty, $rel:expr) => {
        impl Scalar for $t {
            #[inline]
            fn abs_val(&self) -> Self {
                self.abs()
            }

            #[inline]
            fn within(&self, tol: f64) -> bool {
                (self.abs() as f64) <= tol
            }

            #[inline]
            fn negligible_against(&self, scale: &Self) -> bool {
                *self == 0.0 || self.abs() <= $rel * scale.abs()
            }
        }
    };
}

impl_float_scalar!(f64, 1e-12);
impl_float_scalar!(f32, 1e-6);

impl Scalar for BigRational {
    fn abs_val(&self) -> Self {
        Signed::abs(self)
    }

    fn within(&self, _tol: f64) -> bool {
        self.is_zero()
    }

    fn negligible_against(&self, _scale: &Self) -> bool {
        self.is_zero()
    }
}

/// Floating-point scalar for path-space computations.
pub trait Real: Scalar + Float + Copy + Display + Sum + Default {
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("representable literal")
    }
}

impl Real for f64 {}
impl Real for f32 {}

/// Exact rational from a ratio of integers.
pub fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}
