//! Scalar abstraction: `f32` or `f64`.

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar the grid and geometry code is generic over.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssignOps + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Shorthand for `Self::from_f64(x).unwrap()`; every finite `f64`
    /// converts (possibly with rounding for `f32`).
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to Real")
    }

    #[inline]
    fn of_usize(x: usize) -> Self {
        Self::from_usize(x).expect("usize converts to Real")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
