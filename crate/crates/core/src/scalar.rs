//! Scalar types the group arithmetic can run over.
//!
//! Floating point (`f32`, `f64`) is used for all numerics; `Rational64`
//! lets structure constants, brackets and the BCH product be checked in
//! exact arithmetic.

use std::fmt::Debug;
use std::ops::Neg;

use num_rational::Rational64;
use num_traits::{Num, ToPrimitive};

/// Ring element usable as a coordinate of a graded group.
pub trait Scalar:
    Num + Copy + Neg<Output = Self> + PartialOrd + Debug + Send + Sync + 'static
{
    /// `num / den` in this scalar type.
    fn from_ratio(num: i64, den: i64) -> Self;

    fn to_f64(self) -> f64;

    /// True when the value counts as zero for structural checks
    /// (absolute tolerance for floats, exact for rationals).
    fn is_negligible(self) -> bool;

    fn abs_val(self) -> Self {
        if self < Self::zero() {
            -self
        } else {
            self
        }
    }
}

impl Scalar for f64 {
    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }

    fn to_f64(self) -> f64 {
        self
    }

    fn is_negligible(self) -> bool {
        self.abs() <= 1e-12
    }
}

impl Scalar for f32 {
    fn from_ratio(num: i64, den: i64) -> Self {
        (num as f64 / den as f64) as f32
    }

    fn to_f64(self) -> f64 {
        self as f64
    }

    fn is_negligible(self) -> bool {
        self.abs() <= 1e-5
    }
}

impl Scalar for Rational64 {
    fn from_ratio(num: i64, den: i64) -> Self {
        Rational64::new(num, den)
    }

    fn to_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    fn is_negligible(self) -> bool {
        self == Rational64::from_integer(0)
    }
}
