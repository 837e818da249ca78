//! Small dense solves with an explicit conditioning check. Systems here are at
//! most p x p with p in the tens, so SVD-based solves are cheap and give the
//! reciprocal condition number for free.

use nalgebra::{DMatrix, DVector};

use crate::error::MomentError;

/// Reciprocal condition number below which a system is treated as singular.
pub const RCOND_TOL: f64 = 1e-12;

/// Solves `m x = rhs`, failing when the reciprocal condition number of `m`
/// falls below [`RCOND_TOL`].
pub fn solve_checked(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>, MomentError> {
    assert_eq!(m.nrows(), m.ncols(), "square system expected");
    assert_eq!(m.nrows(), rhs.len());
    if m.nrows() == 0 {
        return Ok(DVector::zeros(0));
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let rcond = if smax > 0.0 { smin / smax } else { 0.0 };
    if !rcond.is_finite() || rcond < RCOND_TOL {
        return Err(MomentError::Singular { rcond });
    }
    svd.solve(rhs, 0.0)
        .map_err(|_| MomentError::Singular { rcond })
}

/// Matrix inverse with the same conditioning check as [`solve_checked`].
pub fn invert_checked(m: &DMatrix<f64>) -> Result<DMatrix<f64>, MomentError> {
    let n = m.nrows();
    assert_eq!(n, m.ncols());
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let rcond = if smax > 0.0 { smin / smax } else { 0.0 };
    if !rcond.is_finite() || rcond < RCOND_TOL {
        return Err(MomentError::Singular { rcond });
    }
    svd.pseudo_inverse(0.0)
        .map_err(|_| MomentError::Singular { rcond })
}

/// Minimum eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    nalgebra::SymmetricEigen::new(m.clone())
        .eigenvalues
        .min()
}
