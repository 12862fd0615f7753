//! Scalar abstraction shared by the map iteration, metrics and observables.
//!
//! Implemented for `f32`, `f64` and exact rationals ([`BigRational`]). Floating
//! types advertise their significand width so that expanding maps can track how
//! many genuine bits an orbit has left.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, One, Signed, ToPrimitive};

pub trait Scalar:
    Clone + PartialOrd + Debug + Send + Sync + 'static + Num + Signed + ToPrimitive
{
    /// Significand width in bits, `None` for exact arithmetic.
    const PRECISION_BITS: Option<u32>;

    fn floor(&self) -> Self;

    /// Nearest representable value (exact for rationals).
    fn from_f64(v: f64) -> Self;

    fn from_usize(v: usize) -> Self;

    /// `numerator / 2^log2_den`.
    fn from_dyadic(numerator: u64, log2_den: u32) -> Self;

    /// `self^exponent`; `None` when the type has no transcendental functions.
    fn powf(&self, exponent: &Self) -> Option<Self>;

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Reduce into `[0, 1)`.
    fn wrap_unit(&self) -> Self {
        let w = self.clone() - self.floor();
        // Floating rounding can produce exactly 1.0 for inputs just below an integer.
        if w >= Self::one() {
            Self::zero()
        } else {
            w
        }
    }

    fn min_of(a: Self, b: Self) -> Self {
        if b < a {
            b
        } else {
            a
        }
    }

    fn max_of(a: Self, b: Self) -> Self {
        if b > a {
            b
        } else {
            a
        }
    }
}

macro_rules! impl_float_scalar {
    ($t:ty, $bits:expr) => {
        impl Scalar for $t {
            const PRECISION_BITS: Option<u32> = Some($bits);

            fn floor(&self) -> Self {
                <$t>::floor(*self)
            }

            fn from_f64(v: f64) -> Self {
                v as $t
            }

            fn from_usize(v: usize) -> Self {
                v as $t
            }

            fn from_dyadic(numerator: u64, log2_den: u32) -> Self {
                (numerator as $t) * (2.0 as $t).powi(-(log2_den as i32))
            }

            fn powf(&self, exponent: &Self) -> Option<Self> {
                Some(<$t>::powf(*self, *exponent))
            }
        }
    };
}

impl_float_scalar!(f32, 24);
impl_float_scalar!(f64, 53);

impl Scalar for BigRational {
    const PRECISION_BITS: Option<u32> = None;

    fn floor(&self) -> Self {
        BigRational::floor(self)
    }

    fn from_f64(v: f64) -> Self {
        BigRational::from_float(v).expect("finite value")
    }

    fn from_usize(v: usize) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }

    fn from_dyadic(numerator: u64, log2_den: u32) -> Self {
        BigRational::new(BigInt::from(numerator), BigInt::one() << log2_den as usize)
    }

    fn powf(&self, _exponent: &Self) -> Option<Self> {
        None
    }

    fn to_f64_lossy(&self) -> f64 {
        // ToPrimitive on huge numerators/denominators can overflow to None.
        self.to_f64().unwrap_or_else(|| {
            let shift = self.denom().bits().saturating_sub(60) as usize;
            let n = (self.numer() >> shift).to_f64().unwrap_or(f64::NAN);
            let d = (self.denom() >> shift).to_f64().unwrap_or(f64::NAN);
            n / d
        })
    }
}

/// Exact rational from a small fraction, for tests and examples.
pub fn ratio(numer: i64, denom: i64) -> BigRational {
    BigRational::new(BigInt::from(numer), BigInt::from(denom))
}
