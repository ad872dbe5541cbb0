//! Scalar abstraction for the real-valued math core.
//!
//! Feature vectors, shaped rewards and the Q-network are generic over any
//! floating scalar; container counts and flow quantities stay `i64`
//! everywhere (they are exact by construction).

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating scalar usable by the math core (`f32`, `f64`).
pub trait Real:
    Float + NumAssign + FromPrimitive + ToPrimitive + Sum<Self> + Debug + Display + Default + Send + Sync + 'static
{
}

impl<T> Real for T where
    T: Float
        + NumAssign
        + FromPrimitive
        + ToPrimitive
        + Sum<Self>
        + Debug
        + Display
        + Default
        + Send
        + Sync
        + 'static
{
}

/// Lossy conversion from `f64`; panics only on scalars that cannot represent
/// ordinary finite values, which no supported type triggers.
#[inline]
pub fn real<R: Real>(x: f64) -> R {
    R::from_f64(x).expect("finite f64 must convert")
}

/// Conversion from a container count.
#[inline]
pub fn from_count<R: Real>(n: i64) -> R {
    R::from_i64(n).expect("i64 count must convert")
}
