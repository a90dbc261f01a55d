//! Scalar abstraction: all numeric code in this crate is generic over the
//! floating-point sample type.

use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar usable throughout the library (`f32` or `f64`).
pub trait Real:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + serde::Serialize
    + serde::de::DeserializeOwned
    + Debug
    + Display
    + Default
    + Sum
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Conversion shorthand for numeric literals in generic code.
#[inline]
pub fn real<S: Real>(x: f64) -> S {
    S::from_f64(x).expect("finite f64 literal converts to any Real")
}

/// `x as f64`, for error reporting and diagnostics.
#[inline]
pub fn to_f64<S: Real>(x: S) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
