//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! Math (`sin`, `sqrt`, `abs`, ...) comes from [`nalgebra::RealField`];
//! conversions come from `num-traits`. Only `f32` and `f64` implement
//! [`Real`].

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point scalar: `f32` or `f64`.
pub trait Real:
    RealField
    + Copy
    + FromPrimitive
    + ToPrimitive
    + FromStr
    + Display
    + LowerExp
    + Debug
    + Default
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Literal conversion from `f64` (rounds for `f32`).
    fn of(v: f64) -> Self;

    /// Lossless widening to `f64`.
    fn as_f64(self) -> f64;

    /// Literal conversion from a count.
    fn of_usize(n: usize) -> Self {
        Self::of(n as f64)
    }

    /// Machine epsilon.
    fn eps() -> Self;

    /// Next representable value toward +∞.
    fn step_up(self) -> Self;

    /// Next representable value toward −∞.
    fn step_down(self) -> Self;

    fn is_finite_value(self) -> bool;
}

macro_rules! impl_real {
    ($($t:ty),*) => {
        $(
            impl Real for $t {
                #[inline]
                fn of(v: f64) -> Self {
                    v as $t
                }
                #[inline]
                fn as_f64(self) -> f64 {
                    self as f64
                }
                #[inline]
                fn eps() -> Self {
                    <$t>::EPSILON
                }
                #[inline]
                fn step_up(self) -> Self {
                    self.next_up()
                }
                #[inline]
                fn step_down(self) -> Self {
                    self.next_down()
                }
                #[inline]
                fn is_finite_value(self) -> bool {
                    self.is_finite()
                }
            }
        )*
    };
}

impl_real!(f32, f64);
