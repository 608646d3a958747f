//! Scalar abstractions.
//!
//! Numerical code is written once against [`Real`] (implemented for `f32`
//! and `f64`). The exponent calculus only needs ordered-field arithmetic and
//! is written against [`Exact`], which additionally admits rationals such as
//! [`num_rational::Rational64`] and [`num_rational::BigRational`].

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, Num, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal, rounding to the nearest representable value.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_i64_exact(n: i64) -> Self {
        Self::from_i64(n).expect("integer representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }

    /// Unit roundoff of the type.
    fn unit_roundoff() -> Self {
        Self::epsilon() / Self::lit(2.0)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Ordered field with exact or floating arithmetic.
pub trait Exact: Clone + PartialOrd + Num + FromPrimitive + ToPrimitive + Debug {
    fn from_ratio(num: i64, den: i64) -> Self {
        Self::from_i64(num).expect("representable") / Self::from_i64(den).expect("representable")
    }

    fn approx(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Exact for T where T: Clone + PartialOrd + Num + FromPrimitive + ToPrimitive + Debug {}

/// Smaller of two partially ordered values (the first one on ties).
pub fn min_of<T: PartialOrd + Clone>(a: &T, b: &T) -> T {
    if b < a {
        b.clone()
    } else {
        a.clone()
    }
}

/// Larger of two partially ordered values (the first one on ties).
pub fn max_of<T: PartialOrd + Clone>(a: &T, b: &T) -> T {
    if b > a {
        b.clone()
    } else {
        a.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;

    #[test]
    fn literals_round_trip() {
        assert_eq!(f32::lit(0.5), 0.5f32);
        assert_eq!(f64::lit(0.1), 0.1);
        assert_eq!(f64::from_i64_exact(-7), -7.0);
    }

    #[test]
    fn exact_ratio() {
        let q = Rational64::from_ratio(1, 4);
        assert_eq!(q, Rational64::new(1, 4));
        assert_eq!(q.approx(), 0.25);
        assert_eq!(min_of(&q, &Rational64::new(1, 3)), q);
    }
}
