//! Scalar abstraction the numeric kernels are generic over.
//!
//! The LP solver, the branch-and-bound engine, and the path algorithms only
//! need IEEE-style float semantics, so they take any [`Scalar`]. The blanket
//! impl covers `f32` and `f64`; the crate root re-exports `f64` aliases for
//! the common case.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, NumAssign, NumCast};

/// Floating-point scalar for the generic kernels.
///
/// Default tolerances throughout the crate are chosen for `f64`; when
/// instantiating a kernel at `f32`, loosen the options accordingly.
pub trait Scalar:
    Float + NumAssign + Sum<Self> + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` constant (tolerance, default, literal) to `Self`.
    #[inline]
    fn val(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("scalar constant not representable")
    }

    /// Widens to `f64` for reporting and serialization.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar not representable as f64")
    }
}

impl<T> Scalar for T where
    T: Float + NumAssign + Sum<T> + Debug + Display + Default + Send + Sync + 'static
{
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sum_of_squares<S: Scalar>(xs: &[S]) -> S {
        xs.iter().map(|&x| x * x).sum()
    }

    #[test]
    fn blanket_impl_covers_both_widths() {
        assert_eq!(sum_of_squares(&[1.0f64, 2.0]).as_f64(), 5.0);
        assert_eq!(sum_of_squares(&[1.0f32, 2.0]).as_f64(), 5.0);
        assert_eq!(f32::val(0.5), 0.5f32);
    }
}
