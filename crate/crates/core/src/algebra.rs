//! Finite-dimensional probability algebras.
//!
//! Two concrete models are supported:
//!
//! * the *function model*: complex functions on a finite sample space
//!   `Ω = {ω_1, ..., ω_N}` with strictly positive weights, expectation
//!   `E[a] = Σ w_i a_i`;
//! * the *matrix model*: complex `n × n` matrices with a positive definite
//!   density matrix `ρ`, expectation `E[a] = tr(ρ a)`.
//!
//! Both are unital `*`-algebras with a faithful state. Everything above
//! them (inner products, covariance, independence, uncertainty) is written
//! once against the state.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigh, hermitian_part, hermitian_residual, max_abs_c, CMatrix, CVector};

/// Default absolute tolerance for validating inputs.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Highest centred-monomial degree accepted by [`ProbAlgebra::independence_test`].
pub const MAX_INDEPENDENCE_DEGREE: usize = 8;

/// Smallest eigenvalue (or weight) still counted as strictly positive.
pub const FAITHFUL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Function { weights: Vec<f64> },
    Matrix { rho: CMatrix },
}

/// A validated finite probability algebra together with its faithful state.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbAlgebra {
    model: Model,
    label: String,
}

/// A member of a [`ProbAlgebra`].
#[derive(Debug, Clone, PartialEq)]
pub enum Element {
    Function(CVector),
    Matrix(CMatrix),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassFlags {
    pub self_adjoint: bool,
    pub positive: bool,
    pub projection: bool,
}

/// Complex entry as `[re, im]` in JSON documents.
pub type ComplexPair = [f64; 2];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RhoEntries {
    /// Row-major list of the `n²` entries.
    Flat(Vec<ComplexPair>),
    Rows(Vec<Vec<ComplexPair>>),
}

/// Model descriptor, as loaded from JSON:
/// `{"model":"function","weights":[...]}` or `{"model":"matrix","rho":[[re,im],...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelSpec {
    Function {
        weights: Vec<f64>,
    },
    Matrix {
        rho: RhoEntries,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlgebraSpec {
    #[serde(flatten)]
    pub model: ModelSpec,
    #[serde(default)]
    pub label: String,
    /// Rescale weights / `ρ` to unit mass instead of rejecting them.
    #[serde(default)]
    pub auto_normalise: bool,
}

impl AlgebraSpec {
    pub fn function(weights: Vec<f64>) -> Self {
        AlgebraSpec {
            model: ModelSpec::Function { weights },
            label: String::new(),
            auto_normalise: false,
        }
    }

    pub fn matrix(rho: &CMatrix) -> Self {
        let entries = (0..rho.nrows())
            .flat_map(|r| (0..rho.ncols()).map(move |c| (r, c)))
            .map(|(r, c)| [rho[(r, c)].re, rho[(r, c)].im])
            .collect();
        AlgebraSpec {
            model: ModelSpec::Matrix {
                rho: RhoEntries::Flat(entries),
            },
            label: String::new(),
            auto_normalise: false,
        }
    }

    pub fn with_auto_normalise(mut self, on: bool) -> Self {
        self.auto_normalise = on;
        self
    }
}

impl RhoEntries {
    pub fn to_matrix(&self) -> Result<CMatrix> {
        match self {
            RhoEntries::Flat(v) => {
                let n = (v.len() as f64).sqrt().round() as usize;
                if n * n != v.len() || n == 0 {
                    return Err(Error::InvalidInput(format!(
                        "rho has {} entries, not a non-empty square",
                        v.len()
                    )));
                }
                Ok(CMatrix::from_fn(n, n, |r, c| {
                    let [re, im] = v[r * n + c];
                    Complex64::new(re, im)
                }))
            }
            RhoEntries::Rows(rows) => {
                let n = rows.len();
                if n == 0 || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::InvalidInput("rho rows do not form a non-empty square".into()));
                }
                Ok(CMatrix::from_fn(n, n, |r, c| Complex64::new(rows[r][c][0], rows[r][c][1])))
            }
        }
    }
}

/// Build and validate an algebra from its descriptor.
pub fn make_algebra(spec: &AlgebraSpec) -> Result<ProbAlgebra> {
    let model = match &spec.model {
        ModelSpec::Function { weights } => Model::Function {
            weights: validate_weights(weights, spec.auto_normalise)?,
        },
        ModelSpec::Matrix { rho } => Model::Matrix {
            rho: validate_rho(&rho.to_matrix()?, spec.auto_normalise)?,
        },
    };
    Ok(ProbAlgebra {
        model,
        label: spec.label.clone(),
    })
}

fn validate_weights(weights: &[f64], auto_normalise: bool) -> Result<Vec<f64>> {
    if weights.is_empty() {
        return Err(Error::InvalidInput("no weights".into()));
    }
    if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !w.is_finite()) {
        return Err(Error::InvalidInput(format!("weight {i} is not finite ({w})")));
    }
    if let Some((i, w)) = weights.iter().enumerate().find(|(_, &w)| w <= 0.0) {
        return Err(Error::NonFaithful(format!("weight {i} is {w}, must be > 0")));
    }
    let total: f64 = weights.iter().sum();
    if !auto_normalise && (total - 1.0).abs() > DEFAULT_TOL {
        return Err(Error::NotNormalised(format!("weights sum to {total}")));
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

fn validate_rho(rho: &CMatrix, auto_normalise: bool) -> Result<CMatrix> {
    if rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidInput("rho has non-finite entries".into()));
    }
    let residual = hermitian_residual(rho);
    if residual > DEFAULT_TOL {
        return Err(Error::NotDensity(format!("rho is not self-adjoint (residual {residual:e})")));
    }
    let rho = hermitian_part(rho);
    let trace = rho.trace().re;
    if !auto_normalise && (trace - 1.0).abs() > DEFAULT_TOL {
        return Err(Error::NotNormalised(format!("tr rho = {trace}")));
    }
    if trace <= 0.0 {
        return Err(Error::NonFaithful(format!("tr rho = {trace}")));
    }
    let rho = rho.unscale(trace);
    let (eigs, _) = hermitian_eigh(&rho);
    if eigs[0] <= FAITHFUL_FLOOR {
        return Err(Error::NonFaithful(format!(
            "rho has eigenvalue {:e}, must be strictly positive",
            eigs[0]
        )));
    }
    Ok(rho)
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

impl Element {
    pub fn from_real(values: &[f64]) -> Self {
        Element::Function(DVector::from_iterator(values.len(), values.iter().map(|&v| c(v))))
    }

    pub fn from_complex(values: Vec<Complex64>) -> Self {
        Element::Function(DVector::from_vec(values))
    }

    pub fn from_real_matrix(m: &DMatrix<f64>) -> Self {
        Element::Matrix(m.map(c))
    }

    pub fn dim(&self) -> usize {
        match self {
            Element::Function(v) => v.len(),
            Element::Matrix(m) => m.nrows(),
        }
    }

    pub fn adjoint(&self) -> Element {
        match self {
            Element::Function(v) => Element::Function(v.map(|z| z.conj())),
            Element::Matrix(m) => Element::Matrix(m.adjoint()),
        }
    }

    pub fn scale(&self, s: Complex64) -> Element {
        match self {
            Element::Function(v) => Element::Function(v * s),
            Element::Matrix(m) => Element::Matrix(m * s),
        }
    }

    pub fn add(&self, other: &Element) -> Result<Element> {
        self.zip(other, |a, b| a + b, |a, b| a + b)
    }

    pub fn sub(&self, other: &Element) -> Result<Element> {
        self.zip(other, |a, b| a - b, |a, b| a - b)
    }

    /// Algebra product: pointwise in the function model, matrix product otherwise.
    pub fn mul(&self, other: &Element) -> Result<Element> {
        self.zip(other, |a, b| a.component_mul(b), |a, b| a * b)
    }

    /// `self^k`, with `self^0` the unit of the same shape.
    pub fn pow(&self, k: u32) -> Element {
        let mut acc = self.unit_like();
        for _ in 0..k {
            acc = acc.mul(self).expect("same shape");
        }
        acc
    }

    pub fn unit_like(&self) -> Element {
        match self {
            Element::Function(v) => Element::Function(CVector::from_element(v.len(), c(1.0))),
            Element::Matrix(m) => Element::Matrix(CMatrix::identity(m.nrows(), m.ncols())),
        }
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        match self {
            Element::Function(v) => v.iter().fold(0.0, |a, z| a.max(z.norm())),
            Element::Matrix(m) => max_abs_c(m),
        }
    }

    /// Largest entrywise modulus of `self - other`; `inf` if the shapes differ.
    pub fn max_diff(&self, other: &Element) -> f64 {
        self.sub(other).map(|d| d.max_abs()).unwrap_or(f64::INFINITY)
    }

    pub fn hermitian_part(&self) -> Element {
        match self {
            Element::Function(v) => Element::Function(v.map(|z| c(z.re))),
            Element::Matrix(m) => Element::Matrix(hermitian_part(m)),
        }
    }

    fn zip(
        &self,
        other: &Element,
        fv: impl Fn(&CVector, &CVector) -> CVector,
        fm: impl Fn(&CMatrix, &CMatrix) -> CMatrix,
    ) -> Result<Element> {
        match (self, other) {
            (Element::Function(a), Element::Function(b)) if a.len() == b.len() => {
                Ok(Element::Function(fv(a, b)))
            }
            (Element::Matrix(a), Element::Matrix(b)) if a.shape() == b.shape() => {
                Ok(Element::Matrix(fm(a, b)))
            }
            _ => Err(Error::ModelMismatch(format!(
                "cannot combine {} and {}",
                self.describe(),
                other.describe()
            ))),
        }
    }

    pub(crate) fn describe(&self) -> String {
        match self {
            Element::Function(v) => format!("function element of length {}", v.len()),
            Element::Matrix(m) => format!("{}x{} matrix element", m.nrows(), m.ncols()),
        }
    }
}

impl ProbAlgebra {
    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_function_model(&self) -> bool {
        matches!(self.model, Model::Function { .. })
    }

    /// `N` for the function model, `n` for the matrix model.
    pub fn dim(&self) -> usize {
        match &self.model {
            Model::Function { weights } => weights.len(),
            Model::Matrix { rho } => rho.nrows(),
        }
    }

    /// Weights of the function model.
    pub fn weights(&self) -> Option<&[f64]> {
        match &self.model {
            Model::Function { weights } => Some(weights),
            Model::Matrix { .. } => None,
        }
    }

    pub fn density(&self) -> Option<&CMatrix> {
        match &self.model {
            Model::Matrix { rho } => Some(rho),
            Model::Function { .. } => None,
        }
    }

    pub fn unit(&self) -> Element {
        self.constant(c(1.0))
    }

    pub fn constant(&self, value: Complex64) -> Element {
        match &self.model {
            Model::Function { weights } => Element::Function(CVector::from_element(weights.len(), value)),
            Model::Matrix { rho } => Element::Matrix(CMatrix::identity(rho.nrows(), rho.nrows()) * value),
        }
    }

    pub fn zero(&self) -> Element {
        self.constant(c(0.0))
    }

    /// Canonical vector-space basis: point indicators, or matrix units `E_jk` in row-major order.
    pub fn canonical_basis(&self) -> Vec<Element> {
        match &self.model {
            Model::Function { weights } => (0..weights.len())
                .map(|i| {
                    let mut v = CVector::zeros(weights.len());
                    v[i] = c(1.0);
                    Element::Function(v)
                })
                .collect(),
            Model::Matrix { rho } => {
                let n = rho.nrows();
                (0..n * n)
                    .map(|k| {
                        let mut m = CMatrix::zeros(n, n);
                        m[(k / n, k % n)] = c(1.0);
                        Element::Matrix(m)
                    })
                    .collect()
            }
        }
    }

    pub fn check_member(&self, a: &Element) -> Result<()> {
        let ok = match (&self.model, a) {
            (Model::Function { weights }, Element::Function(v)) => v.len() == weights.len(),
            (Model::Matrix { rho }, Element::Matrix(m)) => m.shape() == rho.shape(),
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::ModelMismatch(format!(
                "{} in an algebra of {}",
                a.describe(),
                self.describe()
            )))
        }
    }

    fn describe(&self) -> String {
        match &self.model {
            Model::Function { weights } => format!("functions on {} points", weights.len()),
            Model::Matrix { rho } => format!("{n}x{n} matrices", n = rho.nrows()),
        }
    }

    /// The state: `Σ w_i a_i` or `tr(ρ a)`.
    pub fn expectation(&self, a: &Element) -> Result<Complex64> {
        self.check_member(a)?;
        Ok(match (&self.model, a) {
            (Model::Function { weights }, Element::Function(v)) => {
                weights.iter().zip(v.iter()).map(|(&w, &z)| z * w).sum()
            }
            (Model::Matrix { rho }, Element::Matrix(m)) => trace_of_product(rho, m),
            _ => unreachable!("membership checked"),
        })
    }

    /// Flags for self-adjointness, positivity and idempotence, relative to `tol`.
    pub fn classify(&self, a: &Element, tol: f64) -> Result<ClassFlags> {
        self.check_member(a)?;
        let scale = 1.0 + a.max_abs();
        let self_adjoint = a.max_diff(&a.adjoint()) <= tol;
        let positive = self_adjoint && min_eigenvalue(&a.hermitian_part()) >= -tol * scale;
        let projection = positive && a.mul(a)?.max_diff(a) <= tol;
        Ok(ClassFlags {
            self_adjoint,
            positive,
            projection,
        })
    }

    /// Mean part `E[a]` and fluctuation `a - E[a]·e`.
    pub fn center_split(&self, a: &Element) -> Result<(Complex64, Element)> {
        let mean = self.expectation(a)?;
        let fluct = a.sub(&self.constant(mean))?;
        Ok((mean, fluct))
    }

    /// `⟨a, b⟩₂ = E[b* a]`.
    pub fn inner2(&self, a: &Element, b: &Element) -> Result<Complex64> {
        self.check_member(a)?;
        self.check_member(b)?;
        self.expectation(&b.adjoint().mul(a)?)
    }

    /// `‖a‖₂² = ⟨a, a⟩₂`, real and non-negative for a faithful state.
    pub fn norm2_sq(&self, a: &Element) -> Result<f64> {
        Ok(self.inner2(a, a)?.re.max(0.0))
    }

    /// `cov(a, b) = ⟨ã, b̃⟩₂`.
    pub fn covariance(&self, a: &Element, b: &Element) -> Result<Complex64> {
        let (_, fa) = self.center_split(a)?;
        let (_, fb) = self.center_split(b)?;
        self.inner2(&fa, &fb)
    }

    pub fn variance(&self, a: &Element) -> Result<f64> {
        Ok(self.covariance(a, a)?.re.max(0.0))
    }

    /// Tests `|cov(m₁, m₂)| ≤ tol` over all centred monomials `a^j (a*)^k`,
    /// `b^j (b*)^k` with `1 ≤ j + k ≤ degree`.
    ///
    /// Finite-degree surrogate for independence: `true` means no correlation
    /// was found up to that degree, not that `a` and `b` are independent.
    pub fn independence_test(&self, a: &Element, b: &Element, degree: usize, tol: f64) -> Result<bool> {
        if degree == 0 {
            return Err(Error::InvalidInput("degree must be at least 1".into()));
        }
        if degree > MAX_INDEPENDENCE_DEGREE {
            return Err(Error::DegreeTooLarge(degree));
        }
        self.check_member(a)?;
        self.check_member(b)?;
        let ma = self.centred_monomials(a, degree)?;
        let mb = self.centred_monomials(b, degree)?;
        for x in &ma {
            for y in &mb {
                if self.inner2(x, y)?.norm() > tol {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    fn centred_monomials(&self, a: &Element, degree: usize) -> Result<Vec<Element>> {
        let adj = a.adjoint();
        let pa: Vec<Element> = (0..=degree as u32).map(|j| a.pow(j)).collect();
        let pstar: Vec<Element> = (0..=degree as u32).map(|k| adj.pow(k)).collect();
        let mut out = Vec::new();
        for total in 1..=degree {
            for j in 0..=total {
                let m = pa[j].mul(&pstar[total - j])?;
                out.push(self.center_split(&m)?.1);
            }
        }
        Ok(out)
    }

    /// `var(a)·var(b) − E[i[a,b]]²/4`, non-negative up to rounding for observables.
    pub fn uncertainty_gap(&self, a: &Element, b: &Element) -> Result<f64> {
        for (name, x) in [("a", a), ("b", b)] {
            if !self.classify(x, DEFAULT_TOL)?.self_adjoint {
                return Err(Error::NotObservable(format!("{name} is not self-adjoint")));
            }
        }
        let a = a.hermitian_part();
        let b = b.hermitian_part();
        let commutator = a.mul(&b)?.sub(&b.mul(&a)?)?;
        let e = self.expectation(&commutator.scale(Complex64::i()))?;
        if e.im.abs() > 1e-12 * (1.0 + e.re.abs()) {
            return Err(Error::NotReal(e.im));
        }
        Ok(self.variance(&a)? * self.variance(&b)? - e.re * e.re / 4.0)
    }

    /// New algebra whose state is `a ↦ E[ρ a]`.
    ///
    /// In the matrix model the reweighted density is `ρ^{1/2} ρ₀ ρ^{1/2}`,
    /// which reproduces `tr(ρ₀ ρ a)` whenever `ρ` commutes with `ρ₀` and is
    /// a self-adjoint state in every case.
    pub fn weighted_state(&self, rho: &Element) -> Result<ProbAlgebra> {
        self.check_member(rho)?;
        let flags = self.classify(rho, DEFAULT_TOL)?;
        if !flags.positive {
            return Err(Error::NotDensity("weight element is not positive".into()));
        }
        let mass = self.expectation(rho)?.re;
        if (mass - 1.0).abs() > DEFAULT_TOL {
            return Err(Error::NotDensity(format!("E[rho] = {mass}, expected 1")));
        }
        let label = format!("{}|weighted", self.label);
        match (&self.model, rho.hermitian_part()) {
            (Model::Function { weights }, Element::Function(v)) => {
                let new: Vec<f64> = weights.iter().zip(v.iter()).map(|(w, z)| w * z.re).collect();
                if let Some(i) = v.iter().position(|z| z.re <= FAITHFUL_FLOOR) {
                    return Err(Error::NonFaithfulResult(format!("component {i} of rho vanishes")));
                }
                Ok(ProbAlgebra {
                    model: Model::Function {
                        weights: validate_weights(&new, true)?,
                    },
                    label,
                })
            }
            (Model::Matrix { rho: base }, Element::Matrix(m)) => {
                let (eigs, vecs) = hermitian_eigh(&m);
                if eigs[0] <= FAITHFUL_FLOOR {
                    return Err(Error::NonFaithfulResult(format!("rho has eigenvalue {:e}", eigs[0])));
                }
                let root_diag = CMatrix::from_diagonal(&CVector::from_iterator(
                    eigs.len(),
                    eigs.iter().map(|&l| c(l.sqrt())),
                ));
                let root = &vecs * root_diag * vecs.adjoint();
                let sigma = &root * base * &root;
                Ok(ProbAlgebra {
                    model: Model::Matrix {
                        rho: validate_rho(&sigma, true)?,
                    },
                    label,
                })
            }
            _ => unreachable!("membership checked"),
        }
    }
}

fn trace_of_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let n = a.nrows();
    let mut acc = c(0.0);
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

fn min_eigenvalue(a: &Element) -> f64 {
    match a {
        Element::Function(v) => v.iter().map(|z| z.re).fold(f64::INFINITY, f64::min),
        Element::Matrix(m) => hermitian_eigh(m).0.first().copied().unwrap_or(0.0),
    }
}

/// Random-matrix element: one `n × n` matrix per atom of a function-model
/// outer algebra, evaluated against a matrix-model inner state.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomMatrixElement {
    samples: Vec<CMatrix>,
}

impl RandomMatrixElement {
    pub fn new(samples: Vec<CMatrix>) -> Result<Self> {
        let n = samples
            .first()
            .map(|m| m.nrows())
            .ok_or_else(|| Error::InvalidInput("no sample matrices".into()))?;
        if let Some(i) = samples.iter().position(|m| m.shape() != (n, n)) {
            return Err(Error::DimensionMismatch(format!("sample {i} is not {n}x{n}")));
        }
        Ok(RandomMatrixElement { samples })
    }

    pub fn samples(&self) -> &[CMatrix] {
        &self.samples
    }

    /// `Σ_i w_i tr(ρ A(ω_i))`.
    pub fn expectation(&self, outer: &ProbAlgebra, inner: &ProbAlgebra) -> Result<Complex64> {
        let weights = outer
            .weights()
            .ok_or_else(|| Error::ModelMismatch("outer algebra must be a function model".into()))?;
        if weights.len() != self.samples.len() {
            return Err(Error::ModelMismatch(format!(
                "{} samples for {} atoms",
                self.samples.len(),
                weights.len()
            )));
        }
        let mut acc = c(0.0);
        for (w, m) in weights.iter().zip(&self.samples) {
            acc += inner.expectation(&Element::Matrix(m.clone()))? * *w;
        }
        Ok(acc)
    }
}
