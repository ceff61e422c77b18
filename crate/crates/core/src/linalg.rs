//! Internal dense linear-algebra helpers on symmetric matrices.
//!
//! Thin conversions between `ndarray` (the public array type of this crate)
//! and `nalgebra` (which supplies Cholesky and symmetric eigendecomposition).

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;

pub(crate) fn to_nalgebra(a: &Array2<f64>) -> DMatrix<f64> {
    let (r, c) = a.dim();
    DMatrix::from_fn(r, c, |i, j| a[[i, j]])
}

pub(crate) fn to_ndarray(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Eigenvalues of a symmetric matrix, ascending.
pub(crate) fn symmetric_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
    let m = to_nalgebra(a);
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

/// Full eigendecomposition of a symmetric matrix.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors as columns, in the
/// same (unsorted) order nalgebra produces.
pub(crate) fn symmetric_eigen(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let eig = SymmetricEigen::new(to_nalgebra(a));
    let values = eig.eigenvalues.iter().copied().collect();
    (values, to_ndarray(&eig.eigenvectors))
}

/// Solves `m * x = rhs` for symmetric positive-definite `m` via Cholesky.
///
/// Returns `None` when the factorization fails (matrix not positive definite).
pub(crate) fn cholesky_solve(m: &Array2<f64>, rhs: &Array2<f64>) -> Option<Array2<f64>> {
    let chol = to_nalgebra(m).cholesky()?;
    Some(to_ndarray(&chol.solve(&to_nalgebra(rhs))))
}

/// Whether the symmetric matrix admits a Cholesky factorization, i.e. is
/// positive definite up to factorization rounding.
pub(crate) fn is_positive_definite(m: &Array2<f64>) -> bool {
    to_nalgebra(m).cholesky().is_some()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn eigenvalues_of_diagonal_matrix() {
        let a = array![[3.0, 0.0], [0.0, 1.0]];
        let ev = symmetric_eigenvalues(&a);
        assert!((ev[0] - 1.0).abs() < 1e-12);
        assert!((ev[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn cholesky_solves_identity() {
        let m = array![[2.0, 0.0], [0.0, 2.0]];
        let rhs = array![[1.0, 0.0], [0.0, 1.0]];
        let x = cholesky_solve(&m, &rhs).unwrap();
        assert!((x[[0, 0]] - 0.5).abs() < 1e-14);
        assert!((x[[1, 1]] - 0.5).abs() < 1e-14);
        assert!(x[[0, 1]].abs() < 1e-14);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = array![[1.0, 2.0], [2.0, 1.0]];
        let rhs = array![[1.0], [0.0]];
        assert!(cholesky_solve(&m, &rhs).is_none());
    }

    #[test]
    fn eigen_reconstructs_matrix() {
        let a = array![[2.0, 0.5, 0.1], [0.5, 1.5, 0.2], [0.1, 0.2, 1.0]];
        let (vals, vecs) = symmetric_eigen(&a);
        let lam = Array2::from_diag(&ndarray::Array1::from_vec(vals));
        let rec = vecs.dot(&lam).dot(&vecs.t());
        for (x, y) in a.iter().zip(rec.iter()) {
            assert!((x - y).abs() < 1e-10);
        }
    }
}
