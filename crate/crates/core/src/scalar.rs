//! Numeric abstractions shared by the analytic modules.
//!
//! Linear channel algebra (coverage fractions, β aggregates, received-bit
//! distributions) only needs field operations, so it is written against
//! [`Scalar`] and can run in exact rational arithmetic. Anything involving
//! logarithms or tail probabilities needs [`Real`].

use std::fmt::Debug;

use num_rational::Rational64;
use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

/// Field-like scalar: `f32`, `f64` or an exact rational.
pub trait Scalar: Num + Clone + PartialOrd + Debug + Send + Sync + 'static {
    /// `numer / denom` in this scalar type. `denom` must be non-zero.
    fn from_ratio(numer: u64, denom: u64) -> Self;

    /// Nearest `f64`, for reporting.
    fn to_f64_lossy(&self) -> f64;
}

impl Scalar for f64 {
    fn from_ratio(numer: u64, denom: u64) -> Self {
        numer as f64 / denom as f64
    }

    fn to_f64_lossy(&self) -> f64 {
        *self
    }
}

impl Scalar for f32 {
    fn from_ratio(numer: u64, denom: u64) -> Self {
        (numer as f64 / denom as f64) as f32
    }

    fn to_f64_lossy(&self) -> f64 {
        f64::from(*self)
    }
}

impl Scalar for Rational64 {
    fn from_ratio(numer: u64, denom: u64) -> Self {
        let n = i64::try_from(numer).expect("numerator fits in i64");
        let d = i64::try_from(denom).expect("denominator fits in i64");
        Rational64::new(n, d)
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

/// Floating-point scalar with transcendental functions.
pub trait Real: Scalar + Float + FromPrimitive {}

impl<T: Scalar + Float + FromPrimitive> Real for T {}

/// Converts an `f64` literal into `T`.
#[inline]
pub(crate) fn lit<T: Real>(v: f64) -> T {
    T::from_f64(v).expect("finite literal")
}

/// Converts a scalar in `[0, 1]`-ish ranges between representations.
#[inline]
pub(crate) fn cast<T: Real, S: Scalar>(v: &S) -> T {
    lit(v.to_f64_lossy())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_conversions_agree() {
        assert_eq!(f64::from_ratio(5, 12), 5.0 / 12.0);
        assert_eq!(Rational64::from_ratio(4, 12), Rational64::new(1, 3));
        assert!((f32::from_ratio(1, 3) - 1.0 / 3.0).abs() < 1e-7);
        assert_eq!(Rational64::new(1, 4).to_f64_lossy(), 0.25);
    }
}
