#![allow(dead_code)]

use fastmu::{uniform_matrix, DenseMatrix, Rng};
use nalgebra::DMatrix;

/// Uniform entries on `[lo, lo + 1)`.
pub fn shifted_uniform(rng: &mut Rng, rows: usize, cols: usize, lo: f64) -> DenseMatrix {
    uniform_matrix(rng, rows, cols).map(|x| x + lo)
}

pub fn to_nalgebra(a: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.rows(), a.cols(), a.as_slice())
}

pub fn min_eigenvalue(a: &DenseMatrix) -> f64 {
    to_nalgebra(a).symmetric_eigen().eigenvalues.min()
}

pub fn max_eigenvalue(a: &DenseMatrix) -> f64 {
    to_nalgebra(a).symmetric_eigen().eigenvalues.max()
}

pub fn max_abs_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn max_rel_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

/// Column `j` of `a` as a K=1 matrix.
pub fn column_of(a: &DenseMatrix, j: usize) -> DenseMatrix {
    DenseMatrix::column(&a.col_vec(j))
}
