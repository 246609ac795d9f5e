//! Scalar abstraction for all real-valued computation.
//!
//! Every numeric routine in this crate is generic over [`Scalar`] so the same
//! code runs in `f32` or `f64`. Acceptance-grade checks (gradient checks,
//! bitwise reproducibility) are exercised with `f64`; `f32` halves memory for
//! exploratory runs at the cost of precision.

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable for model parameters, losses and metrics.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; exact when `Self = f64`.
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to any float scalar")
    }

    /// Widening conversion to `f64`; exact for `f32` and `f64`.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("float scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_exact_for_f64() {
        let v = 0.123_456_789_012_345_f64;
        assert_eq!(f64::from_f64_lossy(v), v);
        assert_eq!(v.to_f64_lossy(), v);
    }

    #[test]
    fn f32_widening_is_exact() {
        let v = 0.25f32;
        assert_eq!(v.to_f64_lossy(), 0.25f64);
        assert_eq!(f32::from_f64_lossy(0.25), 0.25f32);
    }
}
