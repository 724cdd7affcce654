//! Scalar abstraction shared by every numerical routine in the crate.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar usable by the geometry, flow, extremal and second-order code.
///
/// Implemented for `f32` and `f64`. Tolerances are written as `f64` literals
/// and converted with [`Real::lit`], so the defaults only make sense in
/// double precision; `f32` is supported for the algebraic parts.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + serde::Serialize + Send + Sync + 'static
{
    /// Converts an `f64` literal into the scalar type.
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("literal representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// Sign as `+1`/`-1`, with zero mapped to `+1`.
    fn sign_i8(self) -> i8 {
        if self < Self::zero() {
            -1
        } else {
            1
        }
    }
}

impl Real for f32 {}
impl Real for f64 {}
