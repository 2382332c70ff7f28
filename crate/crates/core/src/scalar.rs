//! Scalar abstraction: every numerical routine is generic over `Real`.

use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar for all numerical routines (f32 or f64).
pub trait Real: nalgebra::RealField + FromPrimitive + ToPrimitive + Copy {}

impl<T> Real for T where T: nalgebra::RealField + FromPrimitive + ToPrimitive + Copy {}

/// Converts an `f64` constant into the working scalar type.
#[inline]
pub fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("constant not representable in scalar type")
}
