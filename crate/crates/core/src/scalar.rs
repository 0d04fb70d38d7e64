//! Floating-point scalar abstraction.
//!
//! Every numeric routine in this crate is generic over [`Scalar`], a thin
//! bundle of `num-traits` bounds satisfied by `f32` and `f64`. The crate root
//! exposes `f64` aliases for the common types; `f64` is what the oracles and
//! the acceptance tolerances are calibrated for, while `f32` instantiations
//! are available for callers that want the smaller footprint and can live
//! with ~1e-6 accuracy.

use num_traits::{Float, FromPrimitive, NumAssign};

/// Scalar type usable throughout the crate: a float with literal conversion,
/// assignment operators, and the usual threading/printing bounds.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + std::iter::Sum + std::fmt::Debug + std::fmt::Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` constant (tolerances, step sizes, literals) into `Self`.
    ///
    /// Panics if the value is not representable, which cannot happen for the
    /// finite literals this crate feeds it.
    #[inline]
    fn cast(value: f64) -> Self {
        Self::from_f64(value).expect("f64 literal must be representable in the scalar type")
    }

    /// `usize` → scalar conversion for averaging denominators and grid sizes.
    #[inline]
    fn cast_usize(value: usize) -> Self {
        Self::from_usize(value).expect("usize must be representable in the scalar type")
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + NumAssign
        + std::iter::Sum
        + std::fmt::Debug
        + std::fmt::Display
        + Default
        + Send
        + Sync
        + 'static
{
}

/// Sup norm (`max |x_i|`) of a slice; 0 for an empty slice.
pub fn sup_norm<F: Scalar>(xs: &[F]) -> F {
    xs.iter().fold(F::zero(), |acc, x| acc.max(x.abs()))
}

/// Sup-norm distance between two equally long slices.
pub fn sup_distance<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(F::zero(), |acc, (x, y)| acc.max((*x - *y).abs()))
}

/// Dot product of two equally long slices.
pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}
