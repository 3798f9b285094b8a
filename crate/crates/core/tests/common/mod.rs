#![allow(dead_code)]

use klfactor::algebra::{make_algebra, AlgebraSpec, Element, ProbAlgebra};
use klfactor::correlation::{CorrelationOp, SnapshotSet};
use klfactor::CMatrix;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unif(rng: &mut impl Rng) -> f64 {
    rng.random_range(-1.0..1.0)
}

pub fn cunif(rng: &mut impl Rng) -> Complex64 {
    Complex64::new(unif(rng), unif(rng))
}

pub fn probability_weights(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

pub fn function_algebra(rng: &mut impl Rng, n: usize) -> ProbAlgebra {
    make_algebra(&AlgebraSpec::function(probability_weights(rng, n)).with_auto_normalise(true)).unwrap()
}

/// `ρ = (AA* + εI) / tr`, safely faithful.
pub fn density(rng: &mut impl Rng, n: usize) -> CMatrix {
    let a = CMatrix::from_fn(n, n, |_, _| cunif(rng));
    let mut rho = &a * a.adjoint() + CMatrix::identity(n, n) * Complex64::new(0.05, 0.0);
    let t = rho.trace();
    rho /= t;
    rho
}

pub fn matrix_algebra(rng: &mut impl Rng, n: usize) -> ProbAlgebra {
    make_algebra(&AlgebraSpec::matrix(&density(rng, n)).with_auto_normalise(true)).unwrap()
}

/// Either model, chosen by `matrix`.
pub fn algebra(rng: &mut impl Rng, matrix: bool, n: usize) -> ProbAlgebra {
    if matrix {
        matrix_algebra(rng, n)
    } else {
        function_algebra(rng, n)
    }
}

pub fn element(rng: &mut impl Rng, alg: &ProbAlgebra) -> Element {
    let n = alg.dim();
    if alg.is_function_model() {
        Element::from_complex((0..n).map(|_| cunif(rng)).collect())
    } else {
        Element::Matrix(CMatrix::from_fn(n, n, |_, _| cunif(rng)))
    }
}

pub fn self_adjoint(rng: &mut impl Rng, alg: &ProbAlgebra) -> Element {
    match element(rng, alg) {
        Element::Function(v) => Element::from_real(&v.iter().map(|z| 2.0 * z.re).collect::<Vec<_>>()),
        Element::Matrix(m) => Element::Matrix(&m + m.adjoint()),
    }
}

pub fn positive(rng: &mut impl Rng, alg: &ProbAlgebra) -> Element {
    let a = element(rng, alg);
    a.adjoint().mul(&a).unwrap()
}

pub fn as_matrix(e: &Element) -> CMatrix {
    match e {
        Element::Function(v) => CMatrix::from_diagonal(v),
        Element::Matrix(m) => m.clone(),
    }
}

/// Independent expectation: `Σ w_i a_i` or `tr(ρ a)`.
pub fn oracle_expectation(alg: &ProbAlgebra, a: &Element) -> Complex64 {
    match (alg.weights(), alg.density(), a) {
        (Some(w), _, Element::Function(v)) => w.iter().zip(v.iter()).map(|(w, z)| z * *w).sum(),
        (_, Some(rho), Element::Matrix(m)) => (rho * m).trace(),
        _ => panic!("model mismatch"),
    }
}

pub fn snapshots(rng: &mut impl Rng, d: usize, m: usize) -> SnapshotSet {
    let data = DMatrix::from_fn(d, m, |_, _| unif(rng));
    let weights = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
    SnapshotSet::new(data, weights).unwrap()
}

/// `C = AᵀA` with `A: k × d`; rank `min(k, d)`.
pub fn psd(rng: &mut impl Rng, d: usize, k: usize) -> CorrelationOp {
    let a = DMatrix::from_fn(k, d, |_, _| unif(rng));
    let c = a.transpose() * &a;
    CorrelationOp::from_matrix((&c + c.transpose()) * 0.5).unwrap()
}

/// `d × n` matrix with orthonormal columns (QR of a Gaussian-like draw).
pub fn orthonormal_columns(rng: &mut impl Rng, d: usize, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, n, |_, _| unif(rng));
    g.qr().q().columns(0, n).into_owned()
}

/// Sorted copy.
pub fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}
