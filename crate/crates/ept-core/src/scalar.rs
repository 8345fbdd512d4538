//! Floating-point scalar abstraction: f32 or f64.

use num_traits::{Float, FromPrimitive, NumAssign, NumCast, ToPrimitive};

/// Scalar type for all numeric kernels.
///
/// Everything in this crate is generic over `Scalar`; the trainer and the
/// checkpoint format pin `f64` (see the aliases at the crate root).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Default
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    /// Lossy cast from any numeric type, panicking only on values the
    /// target cannot represent at all (never happens for the ranges used here).
    fn cast<T: NumCast>(x: T) -> Self {
        NumCast::from(x).expect("numeric cast failed")
    }

    /// Cast to f64 (exact for f32 and f64).
    fn to_f64_lossless(self) -> f64 {
        self.to_f64().expect("float to f64 cast failed")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
