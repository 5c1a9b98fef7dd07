//! Scalar abstraction: every numerical routine in this crate is generic over
//! the floating-point type through [`Scalar`].

use num_traits::{Float, FloatConst, FromPrimitive, NumAssignOps};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar: f32 or f64.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssignOps
    + Sum<Self>
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Convert an f64 literal, panicking only for non-finite inputs.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 literal")
    }

    /// Lossy view as f64, for diagnostics and error messages.
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Shorthand used throughout the crate for converting literals.
pub fn lit<T: Scalar>(v: f64) -> T {
    T::lit(v)
}
