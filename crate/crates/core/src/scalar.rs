//! Scalar abstraction: the geometric core is generic over the floating-point
//! type, with concrete aliases exported at the crate root.

use std::fmt::{Debug, Display};

/// Floating-point scalar the geometry operates on (f32 or f64).
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough conversion from f64 for constants and file I/O.
    fn from_f64_c(v: f64) -> Self {
        Self::from_f64(v).expect("constant representable in scalar type")
    }

    /// Conversion to f64 for file I/O and reporting.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }

    fn half() -> Self {
        Self::from_f64_c(0.5)
    }

    fn two() -> Self {
        Self::from_f64_c(2.0)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
