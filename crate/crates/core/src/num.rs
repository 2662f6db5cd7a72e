//! Scalar abstraction shared by the geometric and metric kernels.

use std::fmt::Debug;

use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + Default + Debug + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar type.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal fits the scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Snaps `v` onto the nearest integer when it lies within `tol` of it.
pub fn snap<T: Real>(v: T, tol: T) -> T {
    let r = v.round();
    if (v - r).abs() <= tol {
        r
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snap_only_within_tolerance() {
        assert_eq!(snap(2.0f64 + 1e-12, 1e-9), 2.0);
        assert_eq!(snap(2.1f64, 1e-9), 2.1);
        assert_eq!(snap(-6.123e-17f32, 1e-6), 0.0);
    }
}
