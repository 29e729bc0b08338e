//! Scalar abstraction for the numeric kernels.
//!
//! Distribution tails and the activity solver are generic over [`Scalar`] so
//! they can run in `f32` or `f64`; the pipeline uses [`crate::Real`].

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by the numeric kernels.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + std::iter::Sum + std::fmt::Debug + std::fmt::Display + 'static
{
    /// Lossy conversion from `usize` (counts, ranks).
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + std::iter::Sum
        + std::fmt::Debug
        + std::fmt::Display
        + 'static
{
}
