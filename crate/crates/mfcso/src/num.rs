//! Scalar abstraction for the numeric kernels.
//!
//! Everything numeric in this crate (filters, distances, the swarm update
//! rules) is generic over [`Real`], so the same code runs in `f32` or `f64`.
//! Concrete aliases for the common case live at the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable throughout the crate.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
}

impl<T> Real for T where
    T: Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
}

/// Lossy cast from `f64`, used for constants and RNG draws.
///
/// All randomness is drawn as `f64` on one logical stream and converted,
/// so an `f32` run consumes exactly the same stream as an `f64` run.
#[inline]
pub fn real<T: Real>(v: f64) -> T {
    T::from(v).expect("f64 -> Real cast")
}

/// Cast back to `f64` for reporting and serialization.
#[inline]
pub fn to_f64<T: Real>(v: T) -> f64 {
    v.to_f64().expect("Real -> f64 cast")
}
