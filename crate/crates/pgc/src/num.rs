//! Scalar abstraction for the engine.
//!
//! All core math (polynomial ring, circuit evaluation, determinants) is
//! generic over [`Real`], which any IEEE float implements. Concrete `f64`
//! aliases live at the crate root.

use std::fmt;
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssignOps};
use rustfft::FftNum;

/// Scalar type the engine computes with.
pub trait Real:
    Float + FloatConst + FromPrimitive + NumAssignOps + Sum + FftNum + fmt::Display + fmt::LowerExp
{
    /// Lossy conversion from `f64`, for literals and tolerances.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + NumAssignOps
        + Sum
        + FftNum
        + fmt::Display
        + fmt::LowerExp
{
}
