//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! All of the math is written against [`Real`], which is implemented for
//! `f32` and `f64`. The crate root exposes `f64` aliases for the common case.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar used throughout the toolkit.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Panics only if the value is not representable,
    /// which cannot happen for `f32`/`f64`.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Finite-difference step for first derivatives at a point of magnitude `scale`.
    ///
    /// `max(1e-5, 1e-7·scale)` in double precision; single precision uses the
    /// cube root of machine epsilon as its floor.
    fn fd_step(scale: Self) -> Self {
        let floor = Self::lit(1e-5).max(Self::epsilon().cbrt());
        floor.max(Self::lit(1e-7) * scale.abs())
    }

    /// Step for second-order central differences.
    fn fd_step_second(scale: Self) -> Self {
        let floor = Self::lit(1e-4).max(Self::epsilon().powf(Self::lit(0.25)));
        floor.max(Self::lit(1e-6) * scale.abs())
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum<S> {
    sum: S,
    carry: S,
}

impl<S: Real> CompensatedSum<S> {
    pub fn new() -> Self {
        Self {
            sum: S::zero(),
            carry: S::zero(),
        }
    }

    #[inline]
    pub fn add(&mut self, x: S) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> S {
        self.sum + self.carry
    }
}

/// Compensated sum of the values in iteration order.
pub fn compensated_sum<S: Real>(values: impl IntoIterator<Item = S>) -> S {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// `a·b` summed over matching entries.
#[inline]
pub fn dot<S: Real>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub fn norm_sq<S: Real>(a: &[S]) -> S {
    dot(a, a)
}

/// Largest absolute entry, zero for an empty slice.
#[inline]
pub fn max_abs<S: Real>(a: &[S]) -> S {
    a.iter().fold(S::zero(), |m, &x| m.max(x.abs()))
}
