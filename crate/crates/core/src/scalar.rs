use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst};

/// Real scalar the scoring and statistics code is generic over.
///
/// Implemented for `f32` and `f64`. The pipeline itself runs on `f64`.
pub trait Scalar: Float + FloatConst + Sum + Debug + Display + Default + Send + Sync + 'static {
    /// Converts an `f64` literal, panicking only for values the type cannot represent at all.
    fn lit(x: f64) -> Self {
        Self::from(x).expect("literal representable in scalar type")
    }

    fn from_usize(n: usize) -> Self {
        Self::from(n).expect("count representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where T: Float + FloatConst + Sum + Debug + Display + Default + Send + Sync + 'static
{}
