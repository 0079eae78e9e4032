//! Thin safe wrappers over LAPACK/BLAS for the dense kernels: Cholesky
//! factorization, triangular solves and the divide-and-conquer symmetric
//! eigendecomposition. `nalgebra`'s `DMatrix` is column-major, so its
//! storage feeds the Fortran routines directly.

use nalgebra::{DMatrix, DVector};
use std::os::raw::c_char;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("Cholesky factorization failed at pivot {pivot} (matrix not positive definite)")]
    NotPositiveDefinite { pivot: usize },
    #[error("LAPACK routine {routine} failed with info = {info}")]
    LapackFailure { routine: &'static str, info: i32 },
}

/// Cholesky factor `L` (lower triangular, `A = L L^T`) of a symmetric
/// positive definite matrix.
pub fn cholesky_lower(a: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut l = a.clone();
    let ni = n as i32;
    let mut info = 0i32;
    unsafe {
        lapack_sys::dpotrf_(
            &(b'L' as c_char),
            &ni,
            l.as_mut_slice().as_mut_ptr(),
            &ni,
            &mut info,
        );
    }
    if info > 0 {
        return Err(LinalgError::NotPositiveDefinite { pivot: info as usize });
    }
    if info < 0 {
        return Err(LinalgError::LapackFailure { routine: "dpotrf", info });
    }
    // dpotrf leaves the strict upper triangle untouched
    for j in 1..n {
        for i in 0..j {
            l[(i, j)] = 0.0;
        }
    }
    Ok(l)
}

/// In place `B <- L^{-1} B` (`transpose = false`) or `B <- L^{-T} B`.
pub fn solve_lower_left(l: &DMatrix<f64>, b: &mut DMatrix<f64>, transpose: bool) {
    use cblas_sys::*;
    let n = l.nrows() as i32;
    let m = b.ncols() as i32;
    assert_eq!(l.nrows(), b.nrows());
    unsafe {
        cblas_dtrsm(
            CBLAS_LAYOUT::CblasColMajor,
            CBLAS_SIDE::CblasLeft,
            CBLAS_UPLO::CblasLower,
            if transpose {
                CBLAS_TRANSPOSE::CblasTrans
            } else {
                CBLAS_TRANSPOSE::CblasNoTrans
            },
            CBLAS_DIAG::CblasNonUnit,
            n,
            m,
            1.0,
            l.as_slice().as_ptr(),
            n,
            b.as_mut_slice().as_mut_ptr(),
            n,
        );
    }
}

/// In place `B <- B L^{-1}` (`transpose = false`) or `B <- B L^{-T}`.
pub fn solve_lower_right(l: &DMatrix<f64>, b: &mut DMatrix<f64>, transpose: bool) {
    use cblas_sys::*;
    let n = l.nrows() as i32;
    let m = b.nrows() as i32;
    assert_eq!(l.nrows(), b.ncols());
    unsafe {
        cblas_dtrsm(
            CBLAS_LAYOUT::CblasColMajor,
            CBLAS_SIDE::CblasRight,
            CBLAS_UPLO::CblasLower,
            if transpose {
                CBLAS_TRANSPOSE::CblasTrans
            } else {
                CBLAS_TRANSPOSE::CblasNoTrans
            },
            CBLAS_DIAG::CblasNonUnit,
            m,
            n,
            1.0,
            l.as_slice().as_ptr(),
            n,
            b.as_mut_slice().as_mut_ptr(),
            m,
        );
    }
}

/// Solves `A x = b` given the Cholesky factor `L` of `A`.
pub fn cholesky_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut x = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
    solve_lower_left(l, &mut x, false);
    solve_lower_left(l, &mut x, true);
    DVector::from_column_slice(x.as_slice())
}

/// Full symmetric eigendecomposition (divide and conquer): returns the
/// eigenvalues in ascending order and the eigenvectors as matrix columns.
pub fn sym_eigh(a: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>), LinalgError> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut v = a.clone();
    let mut w = DVector::zeros(n);
    let ni = n as i32;
    let mut info = 0i32;
    let (mut lwork, mut liwork) = (-1i32, -1i32);
    let (mut wq, mut iwq) = (0.0f64, 0i32);
    unsafe {
        lapack_sys::dsyevd_(
            &(b'V' as c_char),
            &(b'L' as c_char),
            &ni,
            v.as_mut_slice().as_mut_ptr(),
            &ni,
            w.as_mut_slice().as_mut_ptr(),
            &mut wq,
            &lwork,
            &mut iwq,
            &liwork,
            &mut info,
        );
        if info != 0 {
            return Err(LinalgError::LapackFailure { routine: "dsyevd(query)", info });
        }
        lwork = wq as i32;
        liwork = iwq;
        let mut work = vec![0.0f64; lwork.max(1) as usize];
        let mut iwork = vec![0i32; liwork.max(1) as usize];
        lapack_sys::dsyevd_(
            &(b'V' as c_char),
            &(b'L' as c_char),
            &ni,
            v.as_mut_slice().as_mut_ptr(),
            &ni,
            w.as_mut_slice().as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    if info != 0 {
        return Err(LinalgError::LapackFailure { routine: "dsyevd", info });
    }
    Ok((w, v))
}
