//! Scalar abstraction: every numerical routine in this crate is generic over
//! a real field so the same code instantiates at `f64` (the default used by
//! the CLI and the test suite) or `f32`.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar type the library is generic over: `f32` or `f64`.
pub trait Scalar: RealField + FromPrimitive + ToPrimitive + Copy {}

impl<T> Scalar for T where T: RealField + FromPrimitive + ToPrimitive + Copy {}

/// Convert an `f64` constant (tolerance, literal) into the working scalar.
#[inline]
pub fn from_f64<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant representable in scalar type")
}

/// Convert a scalar into `f64` for diagnostics and reports.
#[inline]
pub fn to_f64<T: Scalar>(x: T) -> f64 {
    x.to_f64().expect("scalar convertible to f64")
}
