//! White noise on a finite-dimensional Hilbert space and stationary
//! processes synthesised from a discretised spectral density.
//!
//! Random numbers come from ChaCha20 (`rand_chacha`), seeded with
//! `seed_from_u64(seed)`; path `j` of a stationary synthesis uses stream
//! `j` of that generator, so every path is reproducible on its own and
//! independent of how paths are scheduled. Standard normals are drawn with
//! the `rand_distr` ziggurat sampler.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::max_abs;

/// Smallest path count accepted by [`autocov_check`].
pub const MIN_PATHS: usize = 100;
/// `|z|` above which an autocovariance estimate is flagged.
pub const Z_FLAG: f64 = 4.0;

/// The map `ξ ↦ Σ_i ⟨ξ, ς_i⟩ ζ_i` sending a CONS `{ς_i}` to iid standard normals.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteNoiseMap {
    basis: DMatrix<f64>,
    seed: u64,
}

pub fn white_noise(dim: usize, basis: Option<DMatrix<f64>>, seed: u64) -> Result<WhiteNoiseMap> {
    if dim == 0 {
        return Err(Error::InvalidInput("white noise needs dim >= 1".into()));
    }
    let basis = match basis {
        None => DMatrix::identity(dim, dim),
        Some(b) => {
            if b.shape() != (dim, dim) {
                return Err(Error::DimensionMismatch(format!("basis is {:?}, expected {dim}x{dim}", b.shape())));
            }
            let dev = max_abs(&(b.transpose() * &b - DMatrix::identity(dim, dim)));
            if !(dev <= 1e-10) {
                return Err(Error::NotOrthonormal(dev));
            }
            b
        }
    };
    Ok(WhiteNoiseMap { basis, seed })
}

impl WhiteNoiseMap {
    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `C_W = Σ_i ς_i ς_iᵀ`; the identity for an orthonormal basis.
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    /// `n` draws of `W ξ`. Draw `k` uses the `k`-th block of `dim` normals
    /// of the map's stream, so equal `n` means shared normals across calls.
    pub fn sample(&self, xi: &DVector<f64>, n: usize) -> Result<Vec<f64>> {
        if xi.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!("vector of length {} for dim {}", xi.len(), self.dim())));
        }
        let coeffs = self.basis.transpose() * xi;
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        Ok((0..n)
            .map(|_| {
                coeffs
                    .iter()
                    .map(|c| {
                        let z: f64 = rng.sample(StandardNormal);
                        c * z
                    })
                    .sum()
            })
            .collect())
    }
}

/// Uniform frequency grid `ω_k = omega0 + k·domega` with spectral density values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryModel {
    pub omega0: f64,
    pub domega: f64,
    #[serde(rename = "S")]
    pub density: Vec<f64>,
    pub seed: u64,
}

impl StationaryModel {
    pub fn validate(&self) -> Result<()> {
        if self.density.is_empty() {
            return Err(Error::EmptyGrid);
        }
        if !(self.domega > 0.0 && self.domega.is_finite()) || !self.omega0.is_finite() {
            return Err(Error::InvalidInput(format!(
                "frequency grid needs finite omega0 and domega > 0 (got {}, {})",
                self.omega0, self.domega
            )));
        }
        if let Some((k, s)) = self.density.iter().enumerate().find(|(_, s)| !(s.is_finite() && **s >= 0.0)) {
            return Err(Error::InvalidInput(format!("spectral density S[{k}] = {s} must be finite and >= 0")));
        }
        Ok(())
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.density.len())
            .map(|k| self.omega0 + k as f64 * self.domega)
            .collect()
    }

    /// `c(τ) = Σ_k S_k Δω cos(ω_k τ)`.
    pub fn target_autocov(&self, lag: f64) -> f64 {
        self.frequencies()
            .iter()
            .zip(&self.density)
            .map(|(w, s)| s * self.domega * (w * lag).cos())
            .sum()
    }

    /// `c(0) = Σ_k S_k Δω`.
    pub fn variance(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.domega
    }
}

/// Paths `q(t) = Σ_k √(S_k Δω)(A_k cos ω_k t + B_k sin ω_k t)`, one row per path.
pub fn synth_stationary(model: &StationaryModel, times: &[f64], n_paths: usize) -> Result<DMatrix<f64>> {
    model.validate()?;
    if let Some(t) = times.iter().find(|t| !t.is_finite()) {
        return Err(Error::InvalidInput(format!("time {t} is not finite")));
    }
    let freqs = model.frequencies();
    let amps: Vec<f64> = model.density.iter().map(|s| (s * model.domega).sqrt()).collect();
    let rows: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha20Rng::seed_from_u64(model.seed);
            rng.set_stream(j as u64);
            let coeffs: Vec<(f64, f64)> = amps
                .iter()
                .map(|_| (rng.sample(StandardNormal), rng.sample(StandardNormal)))
                .collect();
            times
                .iter()
                .map(|&t| {
                    freqs
                        .iter()
                        .zip(&amps)
                        .zip(&coeffs)
                        .map(|((w, amp), (a, b))| {
                            if *amp == 0.0 {
                                0.0
                            } else {
                                let (s, c) = (w * t).sin_cos();
                                amp * (a * c + b * s)
                            }
                        })
                        .sum()
                })
                .collect()
        })
        .collect();
    Ok(DMatrix::from_fn(n_paths, times.len(), |r, c| rows[r][c]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutocovEntry {
    pub lag: f64,
    pub pairs: usize,
    pub empirical: f64,
    pub target: f64,
    pub std_error: f64,
    pub z_score: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutocovReport {
    pub n_paths: usize,
    pub entries: Vec<AutocovEntry>,
}

impl AutocovReport {
    pub fn any_flagged(&self) -> bool {
        self.entries.iter().any(|e| e.flagged)
    }
}

/// Index pairs `(a, b)` with `times[b] − times[a] = lag` (to rounding).
pub fn lag_pairs(times: &[f64], lag: f64) -> Vec<(usize, usize)> {
    let lag = lag.abs();
    let tol = 1e-9 * (1.0 + lag);
    let mut out = Vec::new();
    for (a, ta) in times.iter().enumerate() {
        for (b, tb) in times.iter().enumerate() {
            if tb - ta >= -tol && ((tb - ta) - lag).abs() <= tol {
                out.push((a, b));
            }
        }
    }
    out
}

/// Mean and standard error (across paths) of `q(t_a) q(t_b)` averaged over `pairs`.
pub fn pair_product_stats(paths: &DMatrix<f64>, pairs: &[(usize, usize)]) -> (f64, f64) {
    let n = paths.nrows();
    let per_path: Vec<f64> = (0..n)
        .map(|j| pairs.iter().map(|&(a, b)| paths[(j, a)] * paths[(j, b)]).sum::<f64>() / pairs.len() as f64)
        .collect();
    let mean = per_path.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        per_path.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    (mean, (var / n as f64).sqrt())
}

/// Empirical autocovariance at each lag against the model's target.
pub fn autocov_check(
    paths: &DMatrix<f64>,
    times: &[f64],
    model: &StationaryModel,
    lags: &[f64],
) -> Result<AutocovReport> {
    model.validate()?;
    let n = paths.nrows();
    if n < MIN_PATHS {
        return Err(Error::InsufficientPaths { got: n, min: MIN_PATHS });
    }
    if paths.ncols() != times.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} path columns for {} times",
            paths.ncols(),
            times.len()
        )));
    }
    let entries = lags
        .iter()
        .map(|&lag| {
            let pairs = lag_pairs(times, lag);
            if pairs.is_empty() {
                return Err(Error::InvalidInput(format!("no pair of sample times is {lag} apart")));
            }
            let (empirical, std_error) = pair_product_stats(paths, &pairs);
            let target = model.target_autocov(lag);
            let z_score = if std_error > 0.0 {
                (empirical - target) / std_error
            } else if empirical == target {
                0.0
            } else {
                // a degenerate estimate that misses its target is always flagged
                f64::INFINITY.copysign(empirical - target)
            };
            Ok(AutocovEntry {
                lag,
                pairs: pairs.len(),
                empirical,
                target,
                std_error,
                z_score,
                flagged: !(z_score.abs() <= Z_FLAG),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AutocovReport { n_paths: n, entries })
}
