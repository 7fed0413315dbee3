use ndarray::Array2;
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64 as C64;

use crate::error::{AdiabandError, Result};

pub type CMat = Array2<C64>;

/// Eigendecomposition of a Hermitian matrix, ascending eigenvalues, with the
/// eigenvectors as columns of the returned matrix.
///
/// ndarray-linalg's `eigh` hands a row-major array straight to LAPACK, which
/// reads it column-major and therefore diagonalizes the transpose; for a
/// Hermitian input that is the complex conjugate, so the returned vectors
/// must be conjugated back.
pub fn eigh_sorted(m: &CMat) -> Result<(Vec<f64>, CMat)> {
    let (w, v) = m
        .eigh(UPLO::Lower)
        .map_err(|e| AdiabandError::SolverFailure(e.to_string()))?;
    Ok((w.to_vec(), v.mapv(|z| z.conj())))
}

pub fn hermiticity_defect(m: &CMat) -> f64 {
    let mut d = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            d = d.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    d
}

pub fn adjoint(m: &CMat) -> CMat {
    m.t().mapv(|z| z.conj())
}
