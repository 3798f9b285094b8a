//! Correlation operators built from weighted snapshots and their
//! Karhunen-Loève / POD representations.
//!
//! A snapshot set `{(μ_i, r(μ_i), w_i)}` defines the map
//! `R: u ↦ (⟨r(μ_i), u⟩)_i` into the weighted space of parameter
//! functions, and the correlation `C = R*R = Σ_i w_i r_i r_iᵀ`. The
//! spectral decomposition of `C` gives the modes `v_m`, and the SVD of `R`
//! gives the coefficient functions `s_m = λ_m^{-1/2} R v_m`, so that
//! `r(μ) = Σ_m √λ_m s_m(μ) v_m`.

mod companion;
mod factor;

pub use companion::{companion_gram, CompanionGram};
pub use factor::{
    cholesky_factor, eig_sqrt_factor, snapshot_factor, spectral_root, unitary_connect, FactorKind, Factorization,
    CHOLESKY_STOP, PSD_SLACK,
};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{max_abs, symmetric_eigh_desc};

/// Largest state-space dimension accepted by [`build_correlation`].
pub const DEFAULT_DIM_CAP: usize = 10_000;
/// Eigenpairs with `λ ≤ RANK_TOL·λ₁` are not turned into modes.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    /// `d × m`; column `i` is `r(μ_i)`.
    data: DMatrix<f64>,
    weights: Vec<f64>,
    labels: Vec<String>,
}

impl SnapshotSet {
    pub fn new(data: DMatrix<f64>, weights: Vec<f64>) -> Result<Self> {
        let labels = (0..data.ncols()).map(|i| format!("mu{i}")).collect();
        Self::with_labels(data, weights, labels)
    }

    pub fn with_labels(data: DMatrix<f64>, weights: Vec<f64>, labels: Vec<String>) -> Result<Self> {
        let (d, m) = data.shape();
        if d == 0 || m == 0 {
            return Err(Error::InvalidSnapshots(format!("empty snapshot matrix ({d}x{m})")));
        }
        if weights.len() != m {
            return Err(Error::InvalidSnapshots(format!("{} weights for {m} snapshots", weights.len())));
        }
        if labels.len() != m {
            return Err(Error::InvalidSnapshots(format!("{} labels for {m} snapshots", labels.len())));
        }
        if let Some(k) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidSnapshots(format!(
                "entry ({}, {}) is not finite",
                k % d,
                k / d
            )));
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidSnapshots(format!(
                "weight {i} is {w}; weights must be strictly positive (faithfulness)"
            )));
        }
        Ok(SnapshotSet { data, weights, labels })
    }

    pub fn uniform(data: DMatrix<f64>) -> Result<Self> {
        let m = data.ncols().max(1);
        Self::new(data, vec![1.0 / m as f64; m])
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn count(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn snapshot(&self, i: usize) -> DVector<f64> {
        self.data.column(i).into_owned()
    }

    /// `Σ_i w_i ‖r_i‖²`.
    pub fn energy(&self) -> f64 {
        self.data
            .column_iter()
            .zip(&self.weights)
            .map(|(c, w)| w * c.norm_squared())
            .sum()
    }

    /// `Σ_i w_i ‖r_i − approx_i‖²` against a `d × m` matrix of approximations.
    pub fn weighted_error(&self, approx: &DMatrix<f64>) -> f64 {
        (&self.data - approx)
            .column_iter()
            .zip(&self.weights)
            .map(|(c, w)| w * c.norm_squared())
            .sum()
    }
}

/// Symmetric positive semi-definite correlation operator.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationOp {
    matrix: DMatrix<f64>,
    trace: f64,
}

impl CorrelationOp {
    /// Wraps a symmetric matrix. Positivity is checked by the factorisations.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "correlation must be a non-empty square matrix, got {:?}",
                matrix.shape()
            )));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("correlation has non-finite entries".into()));
        }
        let residual = max_abs(&(&matrix - matrix.transpose()));
        if residual > 1e-12 * (1.0 + max_abs(&matrix)) {
            return Err(Error::NotSymmetric(format!("residual {residual:e}")));
        }
        let matrix = (&matrix + matrix.transpose()) * 0.5;
        let trace = matrix.trace();
        Ok(CorrelationOp { matrix, trace })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.trace
    }

    /// Eigenvalues, descending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        symmetric_eigh_desc(&self.matrix).0
    }
}

/// `C = Σ_i w_i r_i r_iᵀ`, with the default dimension cap.
pub fn build_correlation(snap: &SnapshotSet) -> Result<CorrelationOp> {
    build_correlation_capped(snap, DEFAULT_DIM_CAP)
}

pub fn build_correlation_capped(snap: &SnapshotSet, cap: usize) -> Result<CorrelationOp> {
    if snap.dim() > cap {
        return Err(Error::DimensionOverflow { dim: snap.dim(), cap });
    }
    let scaled = DMatrix::from_fn(snap.dim(), snap.count(), |r, c| snap.data[(r, c)] * snap.weights[c]);
    let c = &scaled * snap.data.transpose();
    let matrix = (&c + c.transpose()) * 0.5;
    Ok(CorrelationOp {
        matrix,
        trace: snap.energy(),
    })
}

/// Mean and covariance of a snapshot set whose weights are a probability vector.
pub fn rv_mean_cov(snap: &SnapshotSet) -> Result<(DVector<f64>, CorrelationOp)> {
    let total: f64 = snap.weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::WeightsNotProbability(total));
    }
    let mean = snap
        .data
        .column_iter()
        .zip(&snap.weights)
        .fold(DVector::zeros(snap.dim()), |acc, (c, w)| acc + c * *w);
    let centred = DMatrix::from_fn(snap.dim(), snap.count(), |r, c| snap.data[(r, c)] - mean[r]);
    let centred = SnapshotSet {
        data: centred,
        weights: snap.weights.clone(),
        labels: snap.labels.clone(),
    };
    Ok((mean, build_correlation(&centred)?))
}

/// Spectral decomposition of `C` together with the SVD of `R`.
#[derive(Debug, Clone, Serialize)]
pub struct RSvd {
    /// Retained eigenvalues `λ_1 ≥ ... ≥ λ_k > RANK_TOL·λ_1`.
    pub eigenvalues: Vec<f64>,
    /// `d × k`, orthonormal columns.
    #[serde(skip)]
    pub modes: DMatrix<f64>,
    /// `m × k`, `coeffs[(i, m)] = s_m(μ_i)`.
    #[serde(skip)]
    pub coeffs: DMatrix<f64>,
    /// All eigenvalues of `C`, descending and clamped at zero.
    pub spectrum: Vec<f64>,
    pub trace: f64,
}

impl RSvd {
    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `Σ_m √λ_m s_m(μ_i) v_m` over the first `n` modes, one column per snapshot.
    pub fn reconstruct(&self, n: usize) -> DMatrix<f64> {
        let n = n.min(self.rank());
        let v = self.modes.columns(0, n);
        let s = self.coeffs.columns(0, n);
        let root = DMatrix::from_diagonal(&DVector::from_iterator(
            n,
            self.eigenvalues[..n].iter().map(|l| l.sqrt()),
        ));
        v * root * s.transpose()
    }
}

pub fn eig_decompose(c: &CorrelationOp, snap: &SnapshotSet) -> Result<RSvd> {
    eig_decompose_with(c, snap, RANK_TOL)
}

pub fn eig_decompose_with(c: &CorrelationOp, snap: &SnapshotSet, rank_tol: f64) -> Result<RSvd> {
    if c.dim() != snap.dim() {
        return Err(Error::DimensionMismatch(format!(
            "operator of dimension {} for snapshots of dimension {}",
            c.dim(),
            snap.dim()
        )));
    }
    if c.trace() <= 1e-14 {
        return Err(Error::ZeroOperator(c.trace()));
    }
    let (vals, vecs) = symmetric_eigh_desc(&c.matrix);
    let spectrum: Vec<f64> = vals.iter().map(|l| l.max(0.0)).collect();
    let top = spectrum[0];
    let k = spectrum.iter().take_while(|&&l| l > rank_tol * top).count();
    let modes = vecs.columns(0, k).into_owned();
    let projections = snap.data.transpose() * &modes;
    let coeffs = DMatrix::from_fn(snap.count(), k, |i, m| projections[(i, m)] / spectrum[m].sqrt());
    Ok(RSvd {
        eigenvalues: spectrum[..k].to_vec(),
        modes,
        coeffs,
        spectrum,
        trace: c.trace(),
    })
}

/// Best rank-`n` truncation of a Karhunen-Loève expansion.
#[derive(Debug, Clone, Serialize)]
pub struct KLExpansion {
    pub rank: usize,
    pub eigenvalues: Vec<f64>,
    #[serde(skip)]
    pub modes: DMatrix<f64>,
    #[serde(skip)]
    pub coeffs: DMatrix<f64>,
    /// `Σ_{m>n} λ_m`.
    pub discarded_energy: f64,
    pub trace: f64,
}

impl KLExpansion {
    /// `r_ROM(μ_i)` for every snapshot, as columns.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let root = DMatrix::from_diagonal(&DVector::from_iterator(
            self.rank,
            self.eigenvalues.iter().map(|l| l.sqrt()),
        ));
        &self.modes * root * self.coeffs.transpose()
    }

    /// `r_ROM` at a parameter given by its coefficient values `(s_1(μ), ..., s_n(μ))`.
    pub fn evaluate(&self, s: &[f64]) -> Result<DVector<f64>> {
        if s.len() != self.rank {
            return Err(Error::DimensionMismatch(format!("{} coefficients for rank {}", s.len(), self.rank)));
        }
        let scaled = DVector::from_iterator(self.rank, s.iter().zip(&self.eigenvalues).map(|(x, l)| x * l.sqrt()));
        Ok(&self.modes * scaled)
    }
}

pub fn kl_truncate(svd: &RSvd, n: usize) -> Result<KLExpansion> {
    if n > svd.rank() {
        return Err(Error::RankOutOfRange { n, k: svd.rank() });
    }
    Ok(KLExpansion {
        rank: n,
        eigenvalues: svd.eigenvalues[..n].to_vec(),
        modes: svd.modes.columns(0, n).into_owned(),
        coeffs: svd.coeffs.columns(0, n).into_owned(),
        discarded_energy: svd.spectrum[n..].iter().sum(),
        trace: svd.trace,
    })
}

/// Spectral projectors of `C` grouped by eigenvalue cluster
/// (width `1e-8·λ₁`), for comparisons that must not depend on the choice
/// of basis inside a degenerate eigenspace.
pub fn spectral_projectors(svd: &RSvd) -> Vec<(f64, DMatrix<f64>)> {
    let top = svd.eigenvalues.first().copied().unwrap_or(0.0);
    let asc: Vec<f64> = svd.eigenvalues.iter().rev().copied().collect();
    let k = svd.rank();
    crate::linalg::clusters(&asc, 1e-8 * top)
        .into_iter()
        .rev()
        .map(|r| {
            let cols: Vec<usize> = r.map(|j| k - 1 - j).collect();
            let mean = cols.iter().map(|&j| svd.eigenvalues[j]).sum::<f64>() / cols.len() as f64;
            let mut p = DMatrix::zeros(svd.modes.nrows(), svd.modes.nrows());
            for &j in &cols {
                let v = svd.modes.column(j);
                p += v * v.transpose();
            }
            (mean, p)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_snapshots() -> SnapshotSet {
        SnapshotSet::new(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]), vec![0.75, 0.25]).unwrap()
    }

    #[test]
    fn snapshot_validation() {
        let data = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            SnapshotSet::new(data.clone(), vec![0.5, 0.0]),
            Err(Error::InvalidSnapshots(ref m)) if m.contains("strictly positive")
        ));
        assert!(SnapshotSet::new(data.clone(), vec![0.5]).is_err());
        let mut bad = data;
        bad[(1, 0)] = f64::NAN;
        assert!(SnapshotSet::new(bad, vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn build_correlation_examples() {
        let s = SnapshotSet::new(DMatrix::identity(2, 2), vec![0.5, 0.5]).unwrap();
        let c = build_correlation(&s).unwrap();
        assert_eq!(c.matrix(), &(DMatrix::identity(2, 2) * 0.5));

        let c = build_correlation(&two_snapshots()).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        assert!(max_abs(&(c.matrix() - expected)) < 1e-15);
        assert!((c.trace() - 2.0).abs() < 1e-15);

        let r = DMatrix::from_column_slice(3, 1, &[1.0, -2.0, 0.5]);
        let s = SnapshotSet::new(r.clone(), vec![1.0]).unwrap();
        let c = build_correlation(&s).unwrap();
        assert!(max_abs(&(c.matrix() - &r * r.transpose())) < 1e-15);
        assert!((c.trace() - 5.25).abs() < 1e-15);

        assert!(matches!(
            build_correlation_capped(&s, 2),
            Err(Error::DimensionOverflow { dim: 3, cap: 2 })
        ));
    }

    #[test]
    fn eig_decompose_two_snapshot_case() {
        let s = two_snapshots();
        let svd = eig_decompose(&build_correlation(&s).unwrap(), &s).unwrap();
        assert!((svd.eigenvalues[0] - 1.5).abs() < 1e-14);
        assert!((svd.eigenvalues[1] - 0.5).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((svd.modes[(0, 0)] - h).abs() < 1e-14 && (svd.modes[(1, 0)] - h).abs() < 1e-14);
        assert!((svd.modes[(0, 1)] - h).abs() < 1e-14 && (svd.modes[(1, 1)] + h).abs() < 1e-14);
        // s₁ = (√2/√1.5, 0)
        assert!((svd.coeffs[(0, 0)] - (2.0f64 / 1.5).sqrt()).abs() < 1e-14);
        assert!(svd.coeffs[(1, 0)].abs() < 1e-14);
        let norm: f64 = (0..2).map(|i| s.weights()[i] * svd.coeffs[(i, 0)].powi(2)).sum();
        assert!((norm - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eig_decompose_degenerate_compares_projectors() {
        let s = SnapshotSet::new(DMatrix::identity(2, 2), vec![0.5, 0.5]).unwrap();
        let svd = eig_decompose(&build_correlation(&s).unwrap(), &s).unwrap();
        assert!(svd.eigenvalues.iter().all(|l| (l - 0.5).abs() < 1e-15));
        let proj = spectral_projectors(&svd);
        assert_eq!(proj.len(), 1);
        assert!(max_abs(&(&proj[0].1 - DMatrix::identity(2, 2))) < 1e-14);
    }

    #[test]
    fn eig_decompose_errors() {
        let s = SnapshotSet::new(DMatrix::zeros(2, 2), vec![0.5, 0.5]).unwrap();
        let c = build_correlation(&s).unwrap();
        assert!(matches!(eig_decompose(&c, &s), Err(Error::ZeroOperator(_))));
        let other = SnapshotSet::new(DMatrix::identity(3, 3), vec![1.0; 3]).unwrap();
        assert!(matches!(
            eig_decompose(&build_correlation(&other).unwrap(), &s),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn kl_truncate_examples() {
        let s = two_snapshots();
        let c = build_correlation(&s).unwrap();
        let svd = eig_decompose(&c, &s).unwrap();
        let kl1 = kl_truncate(&svd, 1).unwrap();
        assert!((kl1.discarded_energy - 0.5).abs() < 1e-14);
        assert!((s.weighted_error(&kl1.reconstruct()) - 0.5).abs() < 1e-14);

        let full = kl_truncate(&svd, 2).unwrap();
        assert!(full.discarded_energy.abs() < 1e-14);
        assert!(max_abs(&(full.reconstruct() - s.data())) < 1e-14);

        let empty = kl_truncate(&svd, 0).unwrap();
        assert!((empty.discarded_energy - c.trace()).abs() < 1e-14);
        assert!(matches!(kl_truncate(&svd, 3), Err(Error::RankOutOfRange { n: 3, k: 2 })));

        let col0 = kl1.evaluate(&[svd.coeffs[(0, 0)]]).unwrap();
        assert!((col0 - kl1.reconstruct().column(0)).norm() < 1e-15);
    }

    #[test]
    fn mean_cov_examples() {
        let s = SnapshotSet::new(DMatrix::identity(2, 2), vec![0.5, 0.5]).unwrap();
        let (mean, cov) = rv_mean_cov(&s).unwrap();
        assert_eq!(mean.as_slice(), &[0.5, 0.5]);
        let expected = DMatrix::from_row_slice(2, 2, &[0.25, -0.25, -0.25, 0.25]);
        assert!(max_abs(&(cov.matrix() - expected)) < 1e-15);

        let r = [1.0, 2.0, -3.0];
        let same = SnapshotSet::new(DMatrix::from_fn(3, 4, |i, _| r[i]), vec![0.25; 4]).unwrap();
        let (mean, cov) = rv_mean_cov(&same).unwrap();
        assert_eq!(mean.as_slice(), &r);
        assert!(max_abs(cov.matrix()) < 1e-15);

        let pm = SnapshotSet::new(DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 2.0, -2.0]), vec![0.5, 0.5]).unwrap();
        let (mean, cov) = rv_mean_cov(&pm).unwrap();
        assert!(mean.norm() < 1e-15);
        assert!(max_abs(&(cov.matrix() - build_correlation(&pm).unwrap().matrix())) < 1e-15);

        assert!(matches!(
            rv_mean_cov(&two_snapshots().clone_with_weights(vec![1.0, 1.0])),
            Err(Error::WeightsNotProbability(_))
        ));
    }

    impl SnapshotSet {
        fn clone_with_weights(&self, w: Vec<f64>) -> SnapshotSet {
            SnapshotSet::new(self.data.clone(), w).unwrap()
        }
    }

    #[test]
    fn from_matrix_rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(CorrelationOp::from_matrix(m), Err(Error::NotSymmetric(_))));
    }
}
