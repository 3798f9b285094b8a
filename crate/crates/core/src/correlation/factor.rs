//! Factorisations `C = BᵀB` and the orthogonal maps connecting them.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{CorrelationOp, SnapshotSet, RANK_TOL};
use crate::error::{Error, Result};
use crate::linalg::{max_abs, symmetric_eigh_desc};

/// Pivots that may go this far below zero (relative to `λ_max`) before the
/// operator is declared indefinite.
pub const PSD_SLACK: f64 = 1e-10;
/// Pivoted Cholesky stops once every remaining pivot is below this fraction
/// of the largest diagonal entry.
pub const CHOLESKY_STOP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FactorKind {
    EigSqrt,
    Cholesky,
    SpectralRoot,
    Snapshot,
    External,
}

/// `B: p × d` with `BᵀB = C`.
#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    pub b: DMatrix<f64>,
    pub kind: FactorKind,
}

impl Factorization {
    /// Wraps a user-supplied factor after checking it reproduces `c`.
    pub fn external(b: DMatrix<f64>, c: &CorrelationOp) -> Result<Self> {
        let f = Factorization {
            b,
            kind: FactorKind::External,
        };
        if f.b.ncols() != c.dim() {
            return Err(Error::DimensionMismatch(format!(
                "factor has {} columns for an operator of dimension {}",
                f.b.ncols(),
                c.dim()
            )));
        }
        let res = f.residual(c);
        if res > 1e-9 * (1.0 + c.trace()) {
            return Err(Error::MismatchedCorrelation(format!("|BtB - C|max = {res:e}")));
        }
        Ok(f)
    }

    pub fn gram(&self) -> DMatrix<f64> {
        self.b.transpose() * &self.b
    }

    /// `‖BᵀB − C‖_max`.
    pub fn residual(&self, c: &CorrelationOp) -> f64 {
        max_abs(&(self.gram() - c.matrix()))
    }

    pub fn rows(&self) -> usize {
        self.b.nrows()
    }
}

fn check_psd(values_desc: &[f64]) -> Result<f64> {
    let scale = values_desc.iter().fold(0.0f64, |a, l| a.max(l.abs()));
    let min = values_desc.last().copied().unwrap_or(0.0);
    if min < -PSD_SLACK * scale {
        return Err(Error::NotPsd(format!("eigenvalue {min:e} with lambda_max {scale:e}")));
    }
    Ok(scale)
}

/// Diagonally pivoted Cholesky; `B = Lᵀ` has one row per accepted pivot
/// and is upper triangular after permuting columns into pivot order.
pub fn cholesky_factor(c: &CorrelationOp) -> Result<Factorization> {
    let d = c.dim();
    let lambda_max = check_psd(&c.eigenvalues())?;
    let mut a = c.matrix().clone();
    let max_diag = (0..d).fold(0.0f64, |m, i| m.max(a[(i, i)]));
    let mut remaining: Vec<usize> = (0..d).collect();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    while !remaining.is_empty() {
        let (pos, &j) = remaining
            .iter()
            .enumerate()
            .fold(None, |best: Option<(usize, &usize)>, (p, i)| match best {
                Some((_, b)) if a[(*b, *b)] >= a[(*i, *i)] => best,
                _ => Some((p, i)),
            })
            .expect("non-empty");
        let low = remaining.iter().map(|&i| a[(i, i)]).fold(f64::INFINITY, f64::min);
        if low < -PSD_SLACK * lambda_max {
            return Err(Error::NotPsd(format!("pivot {low:e} with lambda_max {lambda_max:e}")));
        }
        let pivot = a[(j, j)];
        if pivot <= CHOLESKY_STOP * max_diag {
            break;
        }
        let root = pivot.sqrt();
        let mut row = vec![0.0; d];
        for &i in &remaining {
            row[i] = a[(i, j)] / root;
        }
        for &p in &remaining {
            for &q in &remaining {
                a[(p, q)] -= row[p] * row[q];
            }
        }
        for k in 0..d {
            a[(j, k)] = 0.0;
            a[(k, j)] = 0.0;
        }
        remaining.remove(pos);
        rows.push(row);
    }
    let b = DMatrix::from_fn(rows.len(), d, |r, k| rows[r][k]);
    Ok(Factorization {
        b,
        kind: FactorKind::Cholesky,
    })
}

/// `B = C^{1/2} = V √Λ Vᵀ`, symmetric positive semi-definite.
pub fn spectral_root(c: &CorrelationOp) -> Result<Factorization> {
    let (vals, vecs) = symmetric_eigh_desc(c.matrix());
    check_psd(&vals)?;
    let root = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        vals.len(),
        vals.iter().map(|l| l.max(0.0).sqrt()),
    ));
    let b = &vecs * root * vecs.transpose();
    Ok(Factorization {
        b: (&b + b.transpose()) * 0.5,
        kind: FactorKind::SpectralRoot,
    })
}

/// `B = √Λ Vᵀ` over the retained eigenpairs (`λ > RANK_TOL·λ₁`).
pub fn eig_sqrt_factor(c: &CorrelationOp) -> Result<Factorization> {
    let (vals, vecs) = symmetric_eigh_desc(c.matrix());
    check_psd(&vals)?;
    let top = vals.first().copied().unwrap_or(0.0).max(0.0);
    let k = vals.iter().take_while(|&&l| l > RANK_TOL * top).count();
    let b = DMatrix::from_fn(k, c.dim(), |r, col| vals[r].sqrt() * vecs[(col, r)]);
    Ok(Factorization {
        b,
        kind: FactorKind::EigSqrt,
    })
}

/// The snapshot map itself, `B = W^{1/2} Rᵀ` (`m × d`).
pub fn snapshot_factor(snap: &SnapshotSet) -> Factorization {
    let b = DMatrix::from_fn(snap.count(), snap.dim(), |i, k| snap.weights()[i].sqrt() * snap.data()[(k, i)]);
    Factorization {
        b,
        kind: FactorKind::Snapshot,
    }
}

/// Partial isometry `X: p₁ → p₂` with `B₂ = X B₁`.
///
/// Taken as the orthogonal polar factor of `B₂B₁ᵀ`. Both factors share the
/// right singular vectors of `C`, so this maps the range of `B₁` onto the
/// range of `B₂`; the singular vectors of the (numerically) zero singular
/// values supply an orthonormal completion between the complements.
pub fn unitary_connect(b1: &Factorization, b2: &Factorization) -> Result<DMatrix<f64>> {
    if b1.b.ncols() != b2.b.ncols() {
        return Err(Error::MismatchedCorrelation(format!(
            "factors act on dimensions {} and {}",
            b1.b.ncols(),
            b2.b.ncols()
        )));
    }
    let g1 = b1.gram();
    let g2 = b2.gram();
    let mismatch = max_abs(&(&g1 - &g2));
    if mismatch > 1e-8 * (1.0 + g1.trace()) {
        return Err(Error::MismatchedCorrelation(format!("|B1tB1 - B2tB2|max = {mismatch:e}")));
    }
    let (p1, p2) = (b1.rows(), b2.rows());
    if p1 == 0 || p2 == 0 {
        return Ok(DMatrix::zeros(p2, p1));
    }
    let cross = &b2.b * b1.b.transpose();
    let svd = cross.svd(true, true);
    let u = svd.u.expect("requested");
    let vt = svd.v_t.expect("requested");
    Ok(u * vt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op(rows: usize, data: &[f64]) -> CorrelationOp {
        CorrelationOp::from_matrix(DMatrix::from_row_slice(rows, rows, data)).unwrap()
    }

    #[test]
    fn cholesky_examples() {
        let c = op(2, &[1.0, 0.5, 0.5, 1.0]);
        let f = cholesky_factor(&c).unwrap();
        let l = f.b.transpose();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.75f64.sqrt()]);
        assert!(max_abs(&(l - expected)) < 1e-15);

        let id = cholesky_factor(&op(3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(id.b, DMatrix::identity(3, 3));

        let r = nalgebra::DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let rank1 = CorrelationOp::from_matrix(&r * r.transpose()).unwrap();
        let f = cholesky_factor(&rank1).unwrap();
        assert_eq!(f.rows(), 1);
        assert!(f.residual(&rank1) < 1e-14);
        // pivot is the largest diagonal entry (index 1), the factor row is ±r
        assert!((f.b.row(0).transpose() + &r).norm() < 1e-14 || (f.b.row(0).transpose() - &r).norm() < 1e-14);
    }

    #[test]
    fn cholesky_is_triangular_in_pivot_order() {
        let c = op(3, &[1.0, 0.2, 0.1, 0.2, 4.0, 0.3, 0.1, 0.3, 2.0]);
        let f = cholesky_factor(&c).unwrap();
        // pivots by decreasing diagonal: 1, 2, 0
        let order = [1usize, 2, 0];
        for (r, _) in order.iter().enumerate() {
            for &later in &order[..r] {
                assert_eq!(f.b[(r, later)], 0.0);
            }
        }
        assert!(f.residual(&c) < 1e-14);
    }

    #[test]
    fn not_psd_is_rejected() {
        let c = op(2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(cholesky_factor(&c), Err(Error::NotPsd(_))));
        assert!(matches!(spectral_root(&c), Err(Error::NotPsd(_))));
        assert!(matches!(eig_sqrt_factor(&c), Err(Error::NotPsd(_))));
    }

    #[test]
    fn spectral_root_examples() {
        let c = op(2, &[4.0, 0.0, 0.0, 4.0]);
        let b = spectral_root(&c).unwrap().b;
        assert!(max_abs(&(b - DMatrix::identity(2, 2) * 2.0)) < 1e-15);

        let c = op(2, &[1.0, 0.5, 0.5, 1.0]);
        let b = spectral_root(&c).unwrap().b;
        assert!(max_abs(&(&b * &b - c.matrix())) < 1e-10);
        assert_eq!(b, b.transpose());

        // rank-deficient: shared kernel
        let c = op(2, &[1.0, 1.0, 1.0, 1.0]);
        let b = spectral_root(&c).unwrap().b;
        let x = nalgebra::DVector::from_vec(vec![1.0, -1.0]);
        assert!((&b * &x).norm() < 1e-8);
        let y = nalgebra::DVector::from_vec(vec![1.0, 0.0]);
        assert!((&b * &y).norm() > 0.1 && (c.matrix() * &y).norm() > 0.1);
    }

    #[test]
    fn unitary_connect_examples() {
        let c = op(2, &[1.0, 0.5, 0.5, 1.0]);
        let b1 = spectral_root(&c).unwrap();
        let b2 = cholesky_factor(&c).unwrap();
        let x = unitary_connect(&b1, &b2).unwrap();
        assert!(max_abs(&(&b2.b - &x * &b1.b)) <= 1e-8);
        assert!(max_abs(&(x.transpose() * &x - DMatrix::identity(2, 2))) <= 1e-9);

        let same = unitary_connect(&b1, &b1).unwrap();
        assert!(max_abs(&(same - DMatrix::identity(2, 2))) < 1e-12);

        let (s, co) = (0.3f64.sin(), 0.3f64.cos());
        let q = DMatrix::from_row_slice(2, 2, &[co, -s, s, co]);
        let rotated = Factorization {
            b: &q * &b1.b,
            kind: FactorKind::External,
        };
        let x = unitary_connect(&b1, &rotated).unwrap();
        assert!(max_abs(&(&x * &b1.b - &rotated.b)) < 1e-8);
    }

    #[test]
    fn unitary_connect_rectangular_and_mismatch() {
        let c = op(2, &[1.0, 1.0, 1.0, 1.0]);
        let eig = eig_sqrt_factor(&c).unwrap();
        assert_eq!(eig.rows(), 1);
        let root = spectral_root(&c).unwrap();
        let x = unitary_connect(&eig, &root).unwrap();
        assert_eq!(x.shape(), (2, 1));
        assert!(max_abs(&(&root.b - &x * &eig.b)) < 1e-8);
        assert!((x.transpose() * &x)[(0, 0)] - 1.0 < 1e-12);

        let other = spectral_root(&op(2, &[2.0, 0.0, 0.0, 1.0])).unwrap();
        assert!(matches!(unitary_connect(&root, &other), Err(Error::MismatchedCorrelation(_))));
    }

    #[test]
    fn external_factor_validation() {
        let c = op(2, &[1.0, 0.5, 0.5, 1.0]);
        let good = cholesky_factor(&c).unwrap().b;
        assert!(Factorization::external(good, &c).is_ok());
        assert!(matches!(
            Factorization::external(DMatrix::identity(2, 2), &c),
            Err(Error::MismatchedCorrelation(_))
        ));
    }

    #[test]
    fn snapshot_factor_reproduces_correlation() {
        let snap = SnapshotSet::new(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]), vec![0.75, 0.25]).unwrap();
        let c = super::super::build_correlation(&snap).unwrap();
        assert!(snapshot_factor(&snap).residual(&c) < 1e-15);
    }
}
