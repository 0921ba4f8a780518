//! Floating-point linear algebra used by the grid and pointwise checks.
//!
//! Ranks are decided against a tolerance relative to the largest singular
//! value of the matrix in question.

use nalgebra::{DMatrix, DVector};

/// Relative rank tolerance used throughout.
pub const RANK_TOL: f64 = 1e-9;

fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    a.clone().svd(false, false).singular_values.iter().copied().collect()
}

/// Numerical rank: singular values above `rel_tol * sigma_max`.
pub fn rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = singular_values(a);
    let max = sv.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

/// Orthonormal basis (as columns) of the null space of `a`.
pub fn null_space(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = a.ncols();
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    // pad to at least n rows so the SVD returns a full V
    let rows = a.nrows().max(n);
    let mut padded = DMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| max == 0.0 || svd.singular_values[i] <= rel_tol * max)
        .collect();
    let mut out = DMatrix::zeros(n, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        for j in 0..n {
            out[(j, c)] = vt[(i, j)];
        }
    }
    out
}

/// Orthonormal basis of the column space of `a`.
pub fn column_space(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = a.nrows();
    if a.ncols() == 0 {
        return DMatrix::zeros(n, 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| max > 0.0 && svd.singular_values[i] > rel_tol * max)
        .collect();
    let mut out = DMatrix::zeros(n, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        out.set_column(c, &u.column(i));
    }
    out
}

/// Dimension of the intersection of two column spans.
pub fn intersection_dim(a: &DMatrix<f64>, b: &DMatrix<f64>, rel_tol: f64) -> usize {
    let ra = rank(a, rel_tol);
    let rb = rank(b, rel_tol);
    let joined = hstack(a, b);
    ra + rb - rank(&joined, rel_tol)
}

pub fn hstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows());
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((0, a.ncols()), (b.nrows(), b.ncols())).copy_from(b);
    out
}

pub fn vstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.ncols(), b.ncols());
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((a.nrows(), 0), (b.nrows(), b.ncols())).copy_from(b);
    out
}

/// Minimum-norm least-squares solution of `a x = b` through the SVD
/// pseudo-inverse. Returns the solution and the residual `b - a x`.
pub fn least_norm_solve(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    rel_tol: f64,
) -> (DVector<f64>, DVector<f64>) {
    let n = a.ncols();
    if a.nrows() == 0 || n == 0 {
        return (DVector::zeros(n), b.clone());
    }
    let svd = a.clone().svd(true, true);
    let max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let u = svd.u.as_ref().expect("U");
    let vt = svd.v_t.as_ref().expect("V^T");
    let mut x = DVector::zeros(n);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if max > 0.0 && s > rel_tol * max {
            let coef = u.column(i).dot(b) / s;
            x += vt.row(i).transpose() * coef;
        }
    }
    let residual = b - a * &x;
    (x, residual)
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}
