//! Stochastic Galerkin projection of the random linear decay equation
//! `v̇(ω, t) = −κ(ω) v(ω, t) + f(ω, t)` over a finite probability space.
//!
//! The solution is sought as `v(ω, t) = Σ_j u_j(t) ψ_j(ω)` with `{ψ_j}`
//! orthonormal in `L₂` of the state. Testing the equation against every
//! kept `ψ_l` gives `u̇ = −K u + F(t)` with `K_lj = E[κ ψ_l ψ_j]` and
//! `F_l = E[f ψ_l]`, integrated here with fixed-step RK4.
//!
//! Only a scalar spatial state is handled; a vector state would turn `K`
//! into the block operator `K ⊗ A`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::algebra::{make_algebra, AlgebraSpec, Element, ProbAlgebra};
use crate::error::{Error, Result};
use crate::spectral::gram_schmidt;

const REAL_TOL: f64 = 1e-12;

/// Scalar forcing per atom: constant, or piecewise linear in time with
/// constant continuation outside the table.
#[derive(Debug, Clone, PartialEq)]
pub enum Forcing {
    Constant(Vec<f64>),
    Table { times: Vec<f64>, values: Vec<Vec<f64>> },
}

impl Forcing {
    pub fn zero(atoms: usize) -> Self {
        Forcing::Constant(vec![0.0; atoms])
    }

    pub fn constant(e: &Element) -> Result<Self> {
        Ok(Forcing::Constant(real_values(e, "forcing")?))
    }

    /// Builds a tabulated forcing from one element per (strictly increasing) time.
    pub fn table(times: Vec<f64>, values: &[Element]) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "forcing table has {} times and {} values",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidInput("forcing table times must be finite and strictly increasing".into()));
        }
        let values = values.iter().map(|e| real_values(e, "forcing")).collect::<Result<Vec<_>>>()?;
        Ok(Forcing::Table { times, values })
    }

    fn atoms(&self) -> usize {
        match self {
            Forcing::Constant(v) => v.len(),
            Forcing::Table { values, .. } => values[0].len(),
        }
    }

    /// `f(ω_i, t)`.
    pub fn at(&self, i: usize, t: f64) -> f64 {
        match self {
            Forcing::Constant(v) => v[i],
            Forcing::Table { times, values } => {
                let last = times.len() - 1;
                if t <= times[0] {
                    return values[0][i];
                }
                if t >= times[last] {
                    return values[last][i];
                }
                let k = times.partition_point(|&s| s <= t) - 1;
                let frac = (t - times[k]) / (times[k + 1] - times[k]);
                values[k][i] + frac * (values[k + 1][i] - values[k][i])
            }
        }
    }

    fn knots(&self) -> &[f64] {
        match self {
            Forcing::Constant(_) => &[],
            Forcing::Table { times, .. } => times,
        }
    }
}

fn real_values(e: &Element, what: &str) -> Result<Vec<f64>> {
    match e {
        Element::Function(v) => {
            if let Some(z) = v.iter().find(|z| z.im.abs() > REAL_TOL) {
                return Err(Error::NotObservable(format!("{what} has imaginary part {:e}", z.im)));
            }
            Ok(v.iter().map(|z| z.re).collect())
        }
        Element::Matrix(_) => Err(Error::NotFunctionModel),
    }
}

/// Projected system `u̇ = −K u + F(t)` on the first `keep` basis functions.
#[derive(Debug, Clone)]
pub struct GalerkinSystem {
    weights: Vec<f64>,
    kappa: Vec<f64>,
    forcing: Forcing,
    /// `N × N`; column `j` holds `ψ_j(ω_i)`.
    pub basis: DMatrix<f64>,
    pub keep: usize,
    /// `keep × keep`.
    pub stiffness: DMatrix<f64>,
    pub u0: DVector<f64>,
}

impl GalerkinSystem {
    pub fn atoms(&self) -> usize {
        self.weights.len()
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn kept_basis(&self) -> nalgebra::DMatrixView<'_, f64> {
        self.basis.columns(0, self.keep)
    }

    /// `F_l(t) = E[f(·, t) ψ_l]`.
    pub fn load(&self, t: f64) -> DVector<f64> {
        let f = DVector::from_iterator(self.atoms(), (0..self.atoms()).map(|i| self.forcing.at(i, t)));
        self.project(&f)
    }

    /// Coefficients `E[g ψ_l]` of a real random variable on the kept basis.
    pub fn project(&self, g: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.keep,
            (0..self.keep).map(|l| (0..self.atoms()).map(|i| self.weights[i] * g[i] * self.basis[(i, l)]).sum()),
        )
    }

    /// `v(ω_i) = Σ_j u_j ψ_j(ω_i)`.
    pub fn reconstruct(&self, u: &DVector<f64>) -> DVector<f64> {
        self.kept_basis() * u
    }

    fn rhs(&self, t: f64, u: &DVector<f64>) -> DVector<f64> {
        self.load(t) - &self.stiffness * u
    }
}

/// Assembles the Galerkin system on the full basis.
pub fn assemble(alg: &ProbAlgebra, kappa: &Element, f: &Forcing, u0: &Element) -> Result<GalerkinSystem> {
    assemble_truncated(alg, kappa, f, u0, alg.dim())
}

/// Assembles the Galerkin system on the first `keep` basis functions.
pub fn assemble_truncated(
    alg: &ProbAlgebra,
    kappa: &Element,
    f: &Forcing,
    u0: &Element,
    keep: usize,
) -> Result<GalerkinSystem> {
    let weights = alg.weights().ok_or(Error::NotFunctionModel)?.to_vec();
    let n = weights.len();
    alg.check_member(kappa)?;
    alg.check_member(u0)?;
    if f.atoms() != n {
        return Err(Error::ModelMismatch(format!("forcing has {} atoms, algebra has {n}", f.atoms())));
    }
    if keep == 0 || keep > n {
        return Err(Error::RankOutOfRange { n: keep, k: n });
    }
    let kappa = real_values(kappa, "kappa")?;
    let min = kappa.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(Error::UnstableKappa(min));
    }
    let u0 = real_values(u0, "u0")?;

    // {1, 1_{ω_i} − w_i}, ordered by atom index; the last deviation is dependent and dropped
    let mut candidates = vec![alg.unit()];
    for i in 0..n {
        let mut v = vec![-weights[i]; n];
        v[i] += 1.0;
        candidates.push(Element::from_real(&v));
    }
    let psi = gram_schmidt(alg, &candidates)?;
    if psi.len() != n {
        return Err(Error::InvalidInput(format!("basis construction produced {} of {n} functions", psi.len())));
    }
    let basis = DMatrix::from_fn(n, n, |i, j| match &psi[j] {
        Element::Function(v) => v[i].re,
        Element::Matrix(_) => unreachable!("function model"),
    });
    let stiffness = DMatrix::from_fn(keep, keep, |l, j| {
        (0..n)
            .map(|i| weights[i] * kappa[i] * basis[(i, l)] * basis[(i, j)])
            .sum()
    });
    let stiffness = (&stiffness + stiffness.transpose()) * 0.5;
    let mut sys = GalerkinSystem {
        weights,
        kappa,
        forcing: f.clone(),
        basis,
        keep,
        stiffness,
        u0: DVector::zeros(keep),
    };
    sys.u0 = sys.project(&DVector::from_vec(u0));
    Ok(sys)
}

/// Coefficient trajectories `u_j(t_k)`, one row per stored time.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub coeffs: DMatrix<f64>,
}

impl Trajectory {
    pub fn state(&self, k: usize) -> DVector<f64> {
        self.coeffs.row(k).transpose()
    }

    /// `E[v(t_k)²] = |u(t_k)|²` for each stored time.
    pub fn energy(&self) -> Vec<f64> {
        self.coeffs.row_iter().map(|r| r.norm_squared()).collect()
    }
}

/// Classical RK4 with `steps` equal steps on `[0, t_end]`.
pub fn solve(sys: &GalerkinSystem, t_end: f64, steps: usize) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::InvalidInput("steps must be at least 1".into()));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidInput(format!("final time {t_end} must be finite and > 0")));
    }
    let h = t_end / steps as f64;
    let mut coeffs = DMatrix::zeros(steps + 1, sys.keep);
    let mut times = Vec::with_capacity(steps + 1);
    let mut u = sys.u0.clone();
    coeffs.row_mut(0).copy_from(&u.transpose());
    times.push(0.0);
    for k in 0..steps {
        let t = k as f64 * h;
        let k1 = sys.rhs(t, &u);
        let k2 = sys.rhs(t + 0.5 * h, &(&u + &k1 * (0.5 * h)));
        let k3 = sys.rhs(t + 0.5 * h, &(&u + &k2 * (0.5 * h)));
        let k4 = sys.rhs(t + h, &(&u + &k3 * h));
        u += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteState(k + 1));
        }
        coeffs.row_mut(k + 1).copy_from(&u.transpose());
        times.push((k + 1) as f64 * h);
    }
    Ok(Trajectory { times, coeffs })
}

/// Exact solution at one atom of `v̇ = −κ v + f(t)`, `v(0) = v0`, with `f`
/// piecewise linear between `knots` (integrating factor on each piece).
fn exact_scalar(kappa: f64, v0: f64, f: impl Fn(f64) -> f64, knots: &[f64], t: f64) -> f64 {
    let mut breaks: Vec<f64> = knots.iter().copied().filter(|&s| s > 0.0 && s < t).collect();
    breaks.push(t);
    let mut s0 = 0.0;
    let mut v = v0;
    for s1 in breaks {
        let len = s1 - s0;
        if len <= 0.0 {
            continue;
        }
        let alpha = f(s0);
        let beta = (f(s1) - alpha) / len;
        let particular = |s: f64| alpha / kappa - beta / (kappa * kappa) + beta / kappa * s;
        v = particular(len) + (v - particular(0.0)) * (-kappa * len).exp();
        s0 = s1;
    }
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// `max_{i,k} |v_h(ω_i, t_k) − v(ω_i, t_k)|`.
    pub max_error: f64,
    /// `max_k E[(v_h − v)²]^{1/2}`.
    pub weighted_l2_error: f64,
    /// `max_k E[(v − Π v)²]^{1/2}` for the projection `Π` onto the kept basis;
    /// a lower bound for `weighted_l2_error`, zero on the full basis.
    pub projection_residual: f64,
    /// `max_{k,l} |E[(v̇_h + κ v_h − f) ψ_l]|` over kept `ψ_l`.
    pub orthogonality_residual: f64,
    /// Error at `t = 0`.
    pub initial_error: f64,
}

/// Compares a Galerkin trajectory against the per-atom exact solutions.
pub fn reference_compare(
    alg: &ProbAlgebra,
    kappa: &Element,
    f: &Forcing,
    u0: &Element,
    sys: &GalerkinSystem,
    traj: &Trajectory,
) -> Result<ErrorReport> {
    let weights = alg.weights().ok_or(Error::NotFunctionModel)?;
    let kappa = real_values(kappa, "kappa")?;
    let v0 = real_values(u0, "u0")?;
    let n = weights.len();
    if sys.atoms() != n {
        return Err(Error::ModelMismatch("system and algebra disagree on the atom count".into()));
    }
    let mut report = ErrorReport {
        max_error: 0.0,
        weighted_l2_error: 0.0,
        projection_residual: 0.0,
        orthogonality_residual: 0.0,
        initial_error: 0.0,
    };
    let full = &sys.basis;
    for (k, &t) in traj.times.iter().enumerate() {
        let u = traj.state(k);
        let approx = sys.reconstruct(&u);
        let exact = DVector::from_iterator(
            n,
            (0..n).map(|i| exact_scalar(kappa[i], v0[i], |s| f.at(i, s), f.knots(), t)),
        );
        let err = &approx - &exact;
        let max = err.amax();
        let l2 = (0..n).map(|i| weights[i] * err[i] * err[i]).sum::<f64>().sqrt();
        report.max_error = report.max_error.max(max);
        report.weighted_l2_error = report.weighted_l2_error.max(l2);
        if k == 0 {
            report.initial_error = max;
        }

        // projection residual on the dropped part of the full orthonormal basis
        let dropped: f64 = (sys.keep..n)
            .map(|j| (0..n).map(|i| weights[i] * exact[i] * full[(i, j)]).sum::<f64>().powi(2))
            .sum();
        if sys.keep < n {
            report.projection_residual = report.projection_residual.max(dropped.sqrt());
        }

        let du = sys.rhs(t, &u);
        let vdot = sys.reconstruct(&du);
        let resid = DVector::from_iterator(n, (0..n).map(|i| vdot[i] + kappa[i] * approx[i] - f.at(i, t)));
        let tested = sys.project(&resid);
        report.orthogonality_residual = report.orthogonality_residual.max(tested.amax());
    }
    Ok(report)
}

/// Scalar or per-atom values in a problem file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AtomValues {
    Scalar(f64),
    PerAtom(Vec<f64>),
}

impl AtomValues {
    fn expand(&self, n: usize, what: &str) -> Result<Vec<f64>> {
        match self {
            AtomValues::Scalar(x) => Ok(vec![*x; n]),
            AtomValues::PerAtom(v) if v.len() == n => Ok(v.clone()),
            AtomValues::PerAtom(v) => Err(Error::InvalidInput(format!("{what} has {} values for {n} atoms", v.len()))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingTable {
    pub times: Vec<f64>,
    pub values: Vec<AtomValues>,
}

/// Problem file: `{weights, kappa, f_const | f_table, u0, T, steps, keep}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub weights: Vec<f64>,
    pub kappa: AtomValues,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_const: Option<AtomValues>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_table: Option<ForcingTable>,
    pub u0: AtomValues,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keep: Option<usize>,
    #[serde(default)]
    pub auto_normalise: bool,
}

impl ProblemSpec {
    /// Validated algebra and inputs: `(alg, kappa, forcing, u0)`.
    pub fn inputs(&self) -> Result<(ProbAlgebra, Element, Forcing, Element)> {
        let alg = make_algebra(&AlgebraSpec::function(self.weights.clone()).with_auto_normalise(self.auto_normalise))?;
        let n = alg.dim();
        let kappa = Element::from_real(&self.kappa.expand(n, "kappa")?);
        let u0 = Element::from_real(&self.u0.expand(n, "u0")?);
        let forcing = match (&self.f_const, &self.f_table) {
            (Some(_), Some(_)) => return Err(Error::InvalidInput("give f_const or f_table, not both".into())),
            (Some(c), None) => Forcing::Constant(c.expand(n, "f_const")?),
            (None, Some(tab)) => {
                let values = tab
                    .values
                    .iter()
                    .map(|v| v.expand(n, "f_table").map(|x| Element::from_real(&x)))
                    .collect::<Result<Vec<_>>>()?;
                Forcing::table(tab.times.clone(), &values)?
            }
            (None, None) => Forcing::zero(n),
        };
        Ok((alg, kappa, forcing, u0))
    }
}
