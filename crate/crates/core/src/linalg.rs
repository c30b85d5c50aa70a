//! Small dense symmetric-matrix helpers on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Row-major dense matrix as nested rows (the serialized form).
pub type Matrix = Vec<Vec<f64>>;

pub const SYMMETRY_TOL: f64 = 1e-10;

pub fn to_dmatrix(a: &Matrix) -> Result<DMatrix<f64>> {
    let n = a.len();
    for row in a {
        if row.len() != n {
            return Err(Error::Dimension { expected: n, got: row.len() });
        }
    }
    Ok(DMatrix::from_fn(n, n, |i, j| a[i][j]))
}

pub fn from_dmatrix(m: &DMatrix<f64>) -> Matrix {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

pub fn identity(d: usize) -> Matrix {
    (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

/// Largest `|a_ij − a_ji|`, relative to `max(1, max|a_ij|)`.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let scale = a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut worst = 0.0f64;
    for i in 0..a.nrows() {
        for j in 0..i {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst / scale
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending.
/// Columns of the returned matrix are the matching unit eigenvectors.
pub fn sym_eigen(a: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let asym = asymmetry(a);
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..a.nrows()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(a.nrows(), a.nrows(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// `Q diag(f(λ)) Qᵀ`.
pub fn spectral_map(values: &[f64], vectors: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(values.len(), values.iter().map(|&v| f(v))));
    vectors * d * vectors.transpose()
}

/// Smallest eigenvalue (0 for an empty matrix).
pub fn lambda_min(a: &DMatrix<f64>) -> Result<f64> {
    Ok(sym_eigen(a)?.0.first().copied().unwrap_or(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_eigen_is_sorted() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, -1.0, 2.0]));
        let (v, q) = sym_eigen(&a).unwrap();
        assert_eq!(v, vec![-1.0, 2.0, 3.0]);
        assert!((q[(1, 0)].abs() - 1.0).abs() < 1e-15);
        let back = spectral_map(&v, &q, |x| x);
        assert!((back - a).abs().max() < 1e-14);
    }

    #[test]
    fn rejects_asymmetric() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(sym_eigen(&a), Err(Error::NotSymmetric(_))));
    }
}
