//! Scalar abstraction shared by the geometric and numerical modules.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar usable by every generic routine in the crate: `f32` or `f64`.
///
/// The tolerances quoted throughout the docs assume `f64`; `f32` instantiations work
/// but only reach single-precision accuracy.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Default + Send + Sync + 'static {
    /// Converts an `f64` literal into this scalar.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("representable literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// Machine epsilon of the concrete type.
    fn machine_eps() -> Self;
}

impl Real for f32 {
    fn machine_eps() -> Self {
        f32::EPSILON
    }
}

impl Real for f64 {
    fn machine_eps() -> Self {
        f64::EPSILON
    }
}
