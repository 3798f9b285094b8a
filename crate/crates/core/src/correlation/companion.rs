//! The companion operator `C_Q = R R*` on the parameter side, i.e. the
//! discrete Mercer problem for the kernel `ϰ(μ_i, μ_j) = ⟨r_i, r_j⟩`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{SnapshotSet, RANK_TOL};
use crate::linalg::{max_abs, sign_of_dominant, symmetric_eigh_desc};

#[derive(Debug, Clone, Serialize)]
pub struct CompanionGram {
    /// `K[i][j] = ⟨r_i, r_j⟩`.
    #[serde(skip)]
    pub gram: DMatrix<f64>,
    /// `W^{1/2} K W^{1/2}`.
    #[serde(skip)]
    pub operator: DMatrix<f64>,
    /// Retained eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// `m × k`; column `m` is `s_m` sampled at the parameters.
    #[serde(skip)]
    pub coeff_eigvecs: DMatrix<f64>,
}

impl CompanionGram {
    /// Modes `v_m = λ_m^{-1/2} R W s_m` (`d × k`).
    pub fn modes(&self, snap: &SnapshotSet) -> DMatrix<f64> {
        let k = self.eigenvalues.len();
        DMatrix::from_fn(snap.dim(), k, |r, m| {
            let acc: f64 = (0..snap.count())
                .map(|i| snap.data()[(r, i)] * snap.weights()[i] * self.coeff_eigvecs[(i, m)])
                .sum();
            acc / self.eigenvalues[m].sqrt()
        })
    }

    /// Largest deviation of the Gram matrix from a kernel evaluated at the
    /// sample indices.
    pub fn kernel_deviation(&self, kernel: impl Fn(usize, usize) -> f64) -> f64 {
        let k = DMatrix::from_fn(self.gram.nrows(), self.gram.ncols(), kernel);
        max_abs(&(&self.gram - k))
    }
}

pub fn companion_gram(snap: &SnapshotSet) -> CompanionGram {
    let gram = snap.data().transpose() * snap.data();
    let root_w = DVector::from_iterator(snap.count(), snap.weights().iter().map(|w| w.sqrt()));
    let operator = DMatrix::from_fn(snap.count(), snap.count(), |i, j| root_w[i] * gram[(i, j)] * root_w[j]);
    let (vals, vecs) = symmetric_eigh_desc(&operator);
    let top = vals.first().copied().unwrap_or(0.0).max(0.0);
    let k = vals.iter().take_while(|&&l| l > RANK_TOL * top).count();
    let mut coeff = DMatrix::from_fn(snap.count(), k, |i, m| vecs[(i, m)] / root_w[i]);
    let mut out = CompanionGram {
        gram,
        operator,
        eigenvalues: vals[..k].to_vec(),
        coeff_eigvecs: coeff.clone(),
    };
    // align signs with the modes convention used by `eig_decompose`
    let modes = out.modes(snap);
    for (m, v) in modes.column_iter().enumerate() {
        if sign_of_dominant(v.as_slice()) < 0.0 {
            coeff.column_mut(m).neg_mut();
        }
    }
    out.coeff_eigvecs = coeff;
    out
}
