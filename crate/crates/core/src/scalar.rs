use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::ScalarOperand;
use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Scalar type the numeric code is generic over. Implemented for `f32` and
/// `f64`; the crate-root aliases pin `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + ScalarOperand + Sum + Debug + Display + Send + Sync + 'static
{
    /// Lift an `f64` constant into `Self`. Panics only for values outside the
    /// target type's range, which never holds for the constants used here.
    fn of(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("constant representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
