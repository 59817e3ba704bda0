//! Scalar abstraction: every numerical kernel in this crate is generic over
//! the floating type through [`Real`].

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssignOps};
use rustfft::FftNum;

/// Floating-point scalar (f32 or f64) usable by grids, transforms and solvers.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssignOps
    + Sum
    + FftNum
    + Display
    + LowerExp
    + Debug
    + Send
    + Sync
    + 'static
{
    /// Conversion from an f64 literal; panics only on NaN-producing casts.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Lossy view as f64, for reporting and file formats.
    fn to_f64_lossy(self) -> f64;
}

impl Real for f32 {
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn to_f64_lossy(self) -> f64 {
        self
    }
}
