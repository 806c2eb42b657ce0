use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::Float;

/// Scalar type of network parameters and activities.
///
/// Implemented for `f32` and `f64`. Configuration values (learning rates,
/// step sizes, tolerances) are plain `f64` and converted at the boundary, so
/// training code can be instantiated at either precision while the tests and
/// the theory paths stay in `f64`.
pub trait Real:
    Float + ScalarOperand + LinalgScalar + Sum + Display + Debug + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}
