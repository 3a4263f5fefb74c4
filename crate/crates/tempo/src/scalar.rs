//! Real scalar abstraction so the numerical core can run in either f32 or
//! f64 precision. LAPACK entry points (SVD, Hermitian eigensolve) are hung
//! off the trait because they are the only places where generic code needs
//! to dispatch on the concrete type.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use ndarray::{Array1, Array2, ScalarOperand};
use ndarray_linalg::{Eigh, SVDInto, UPLO};
use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum LinalgError {
    #[error("SVD failed to converge on a {rows}x{cols} matrix")]
    Svd { rows: usize, cols: usize },
    #[error("Hermitian eigensolve failed on a {dim}x{dim} matrix")]
    Eigh { dim: usize },
}

/// Real scalar type usable throughout the tensor core. Implemented for
/// `f32` and `f64`; complex arithmetic is always `Complex<Self>`.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + ScalarOperand
    + Send
    + Sync
    + 'static
{
    /// Full (thin) complex SVD: `m = u . diag(s) . vt`.
    fn svd(
        m: Array2<Complex<Self>>,
    ) -> Result<(Array2<Complex<Self>>, Array1<Self>, Array2<Complex<Self>>), LinalgError>;

    /// Eigendecomposition of a Hermitian matrix: returns ascending real
    /// eigenvalues and the unitary of column eigenvectors.
    fn eigh(
        m: &Array2<Complex<Self>>,
    ) -> Result<(Array1<Self>, Array2<Complex<Self>>), LinalgError>;

    /// Shorthand for lossless conversion of an f64 literal.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal must convert")
    }

    /// Machine epsilon for this precision.
    fn eps() -> Self {
        Self::of(f64::EPSILON) + Self::epsilon()
    }
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            fn svd(
                m: Array2<Complex<Self>>,
            ) -> Result<(Array2<Complex<Self>>, Array1<Self>, Array2<Complex<Self>>), LinalgError>
            {
                let (rows, cols) = m.dim();
                let (u, s, vt) = m
                    .svd_into(true, true)
                    .map_err(|_| LinalgError::Svd { rows, cols })?;
                Ok((u.unwrap(), s, vt.unwrap()))
            }

            fn eigh(
                m: &Array2<Complex<Self>>,
            ) -> Result<(Array1<Self>, Array2<Complex<Self>>), LinalgError> {
                let dim = m.nrows();
                let (vals, vecs) = m
                    .eigh(UPLO::Lower)
                    .map_err(|_| LinalgError::Eigh { dim })?;
                // The backend hands back the conjugate of the eigenvector
                // matrix for complex input; undo that so columns satisfy
                // `m v = lambda v` directly.
                Ok((vals, vecs.mapv(|z| z.conj())))
            }

            fn eps() -> Self {
                <$t>::EPSILON
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);

/// `i` as `Complex<T>`.
pub fn imag_unit<T: Scalar>() -> Complex<T> {
    Complex::new(T::zero(), T::one())
}

/// Promote a real to `Complex<T>` with zero imaginary part.
pub fn re<T: Scalar>(x: T) -> Complex<T> {
    Complex::new(x, T::zero())
}
