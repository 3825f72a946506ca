//! Small dense helpers shared across modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

pub(crate) fn check_dim(expected: usize, x: &Vector) -> Result<()> {
    if x.len() == expected {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got: x.len() })
    }
}

pub(crate) fn check_finite(what: &'static str, x: &Vector) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn inf_norm(x: &Vector) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub(crate) fn is_identity(m: &Matrix) -> bool {
    m.is_square()
        && m.iter().enumerate().all(|(k, &v)| {
            let (i, j) = (k % m.nrows(), k / m.nrows());
            if i == j { v == 1.0 } else { v == 0.0 }
        })
}

/// Eigendecomposition of a symmetric positive definite matrix, with its inverse.
#[derive(Clone, Debug)]
pub(crate) struct SpdFactor {
    pub matrix: Matrix,
    pub inverse: Matrix,
    pub min_eig: f64,
    pub max_eig: f64,
}

impl SpdFactor {
    pub fn new(m: &Matrix, what: &str) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::InvalidShape(format!("{what} must be a non-empty square matrix")));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidShape(format!("{what} has non-finite entries")));
        }
        let scale = m.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let asym = (m - m.transpose()).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if asym > 1e-10 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidShape(format!("{what} is not symmetric")));
        }
        let sym = (m + m.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym.clone());
        let max_eig = eig.eigenvalues.max();
        let min_eig = eig.eigenvalues.min();
        if !(min_eig > 1e-13 * max_eig) || !(max_eig > 0.0) {
            return Err(Error::InvalidShape(format!(
                "{what} is not positive definite (eigenvalues in [{min_eig:e}, {max_eig:e}])"
            )));
        }
        let inv_vals = eig.eigenvalues.map(|l| 1.0 / l);
        let q = &eig.eigenvectors;
        let inverse = q * Matrix::from_diagonal(&inv_vals) * q.transpose();
        let inverse = (&inverse + inverse.transpose()) * 0.5;
        Ok(Self { matrix: sym, inverse, min_eig, max_eig })
    }
}

/// Least-squares solve through SVD; `None` when the system is empty.
pub(crate) fn lstsq(a: &Matrix, b: &Vector) -> Option<Vector> {
    if a.ncols() == 0 {
        return None;
    }
    let svd = a.clone().svd(true, true);
    let tol = 1e-13 * svd.singular_values.max().max(f64::MIN_POSITIVE);
    svd.solve(b, tol).ok()
}

/// Indices of a maximal linearly independent subset of the rows of `a`.
pub(crate) fn independent_rows(a: &Matrix, tol: f64) -> Vec<usize> {
    let mut basis: Vec<Vector> = Vec::new();
    let mut keep = Vec::new();
    for i in 0..a.nrows() {
        let row = a.row(i).transpose();
        let norm = row.norm();
        if norm == 0.0 {
            continue;
        }
        let mut r = row.clone();
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&r);
                r -= q * c;
            }
        }
        let rn = r.norm();
        if rn > tol * norm {
            basis.push(r / rn);
            keep.push(i);
        }
    }
    keep
}

pub(crate) fn select_rows(a: &Matrix, rows: &[usize]) -> Matrix {
    Matrix::from_fn(rows.len(), a.ncols(), |i, j| a[(rows[i], j)])
}
