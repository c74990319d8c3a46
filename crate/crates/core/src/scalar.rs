//! Floating-point element type shared by every kernel in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Element type accepted by [`DenseMatrix`](crate::numerics::DenseMatrix) and the
/// encoder. Implemented for `f32` (the inference default) and `f64` (used as a
/// reference precision in tests).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Storage width in bytes, used by activation-memory accounting.
    const BYTES: usize = std::mem::size_of::<Self>();

    /// Lossless for literals that appear in kernel code; panics only on non-finite input.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize fits in a float")
    }

    fn to_f32_le_bytes(self) -> [u8; 4] {
        self.to_f32().unwrap_or(f32::NAN).to_le_bytes()
    }

    fn of_f32(v: f32) -> Self {
        <Self as FromPrimitive>::from_f32(v).expect("f32 converts to every Scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
