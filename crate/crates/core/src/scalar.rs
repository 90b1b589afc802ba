//! Floating point scalar abstraction shared by the geometry, graph and
//! routing code.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar used for positions and metrics: `f32` or `f64`.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Allowed deviation of `x² + y² + z²` from one for a unit vector.
    const UNIT_TOLERANCE: Self;

    /// Lossy conversion from `f64`; every value used by this crate fits.
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("f64 converts to every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {
    const UNIT_TOLERANCE: Self = 1e-5;
}

impl Scalar for f64 {
    const UNIT_TOLERANCE: Self = 1e-9;
}
