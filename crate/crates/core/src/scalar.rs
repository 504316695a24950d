//! Numeric abstractions shared by every module.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{Add, AddAssign};

use num_traits::{Float, FromPrimitive, Num, NumAssign, ToPrimitive};

/// Floating point scalar used by losses, models and training: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` constant. Every value used in this crate is
    /// representable (possibly rounded) in both `f32` and `f64`.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Arithmetic needed to evaluate generation probabilities: floats, or exact
/// rationals such as `num_rational::Ratio<i128>`.
pub trait Field: Num + Clone + PartialOrd + Debug {}

impl<T: Num + Clone + PartialOrd + Debug> Field for T {}

/// Compensated summation (Kahan, with Neumaier's fix for large addends).
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum<T> {
    sum: T,
    compensation: T,
}

impl<T: Scalar> NeumaierSum<T> {
    pub fn new() -> Self {
        Self {
            sum: T::zero(),
            compensation: T::zero(),
        }
    }

    pub fn value(&self) -> T {
        self.sum + self.compensation
    }
}

impl<T: Scalar> AddAssign<T> for NeumaierSum<T> {
    fn add_assign(&mut self, rhs: T) {
        let t = self.sum + rhs;
        if self.sum.abs() >= rhs.abs() {
            self.compensation += (self.sum - t) + rhs;
        } else {
            self.compensation += (rhs - t) + self.sum;
        }
        self.sum = t;
    }
}

impl<T: Scalar> Add<T> for NeumaierSum<T> {
    type Output = Self;

    fn add(mut self, rhs: T) -> Self {
        self += rhs;
        self
    }
}

impl<T: Scalar> Sum<T> for NeumaierSum<T> {
    fn sum<I: Iterator<Item = T>>(iter: I) -> Self {
        iter.fold(Self::new(), |acc, x| acc + x)
    }
}

/// Compensated sum of an iterator.
pub fn compensated_sum<T: Scalar>(iter: impl IntoIterator<Item = T>) -> T {
    iter.into_iter().sum::<NeumaierSum<T>>().value()
}

pub(crate) fn check_finite<T: Scalar>(values: &[T], what: &'static str) -> crate::Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(crate::Error::NonFinite(what))
    }
}
