//! Small dense helpers shared by the algebra, spectral and correlation code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub(crate) fn max_abs_c(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub(crate) fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Max-entry residual of `m - m*`.
pub(crate) fn hermitian_residual(m: &CMatrix) -> f64 {
    max_abs_c(&(m - m.adjoint()))
}

pub(crate) fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Eigen-decomposition of a Hermitian matrix after explicit symmetrisation.
/// Eigenvalues ascending; columns of the returned matrix are the eigenvectors.
pub(crate) fn hermitian_eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Eigen-decomposition of a real symmetric matrix, eigenvalues descending.
///
/// Each eigenvector's sign is fixed so that its largest-magnitude component
/// (first one on ties) is positive.
pub(crate) fn symmetric_eigh_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    for mut col in vectors.column_iter_mut() {
        let sign = sign_of_dominant(col.as_slice());
        if sign < 0.0 {
            col.neg_mut();
        }
    }
    (values, vectors)
}

pub(crate) fn sign_of_dominant(v: &[f64]) -> f64 {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in v {
        // strict comparison keeps the first maximiser, with slack so that
        // rounding-level differences between equal entries do not flip the choice
        if x.abs() > best * (1.0 + 1e-9) + f64::MIN_POSITIVE {
            best = x.abs();
            sign = if x < 0.0 { -1.0 } else { 1.0 };
        }
    }
    sign
}

/// Groups consecutive sorted values whose gap is at most `width`; returns index ranges.
pub(crate) fn clusters(sorted: &[f64], width: f64) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=sorted.len() {
        if i == sorted.len() || sorted[i] - sorted[i - 1] > width {
            if i > start {
                out.push(start..i);
            }
            start = i;
        }
    }
    out
}
