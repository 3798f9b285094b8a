//! Spectra, functions of observables, `L_p` norms, laws and the GNS
//! left-multiplication representation.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::{Element, ProbAlgebra, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::linalg::{clusters, hermitian_eigh, CMatrix, CVector};

/// Relative width under which eigenvalues are treated as one eigenspace.
pub const MERGE_TOL: f64 = 1e-8;
/// Permitted imaginary residue on the values of an observable.
pub const REAL_RESIDUE: f64 = 1e-10;
/// Loss of orthogonality that triggers another Gram-Schmidt sweep.
pub const REORTH_TOL: f64 = 1e-10;

/// Functions that can be applied to an observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "fn", rename_all = "lowercase")]
pub enum FnSpec {
    Sqrt,
    Abs,
    Exp,
    Power { p: f64 },
    /// `Σ_k coeffs[k] x^k`.
    Poly { coeffs: Vec<f64> },
    /// Indicator of the closed interval `[lo, hi]`.
    Indicator { lo: f64, hi: f64 },
}

impl FnSpec {
    pub fn identity() -> Self {
        FnSpec::Poly { coeffs: vec![0.0, 1.0] }
    }

    /// Evaluates the function at a point of the spectrum.
    pub fn eval(&self, x: f64) -> Result<f64> {
        match self {
            FnSpec::Sqrt => {
                if x < 0.0 {
                    Err(Error::DomainError(format!("sqrt of {x}")))
                } else {
                    Ok(x.sqrt())
                }
            }
            FnSpec::Abs => Ok(x.abs()),
            FnSpec::Exp => Ok(x.exp()),
            FnSpec::Power { p } => {
                if !(*p > 0.0) || !p.is_finite() {
                    return Err(Error::DomainError(format!("power exponent {p} must be > 0")));
                }
                if x < 0.0 && p.fract() != 0.0 {
                    return Err(Error::DomainError(format!("{x} to the fractional power {p}")));
                }
                if p.fract() == 0.0 && p.abs() < i32::MAX as f64 {
                    Ok(x.powi(*p as i32))
                } else {
                    Ok(x.powf(*p))
                }
            }
            FnSpec::Poly { coeffs } => Ok(coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)),
            FnSpec::Indicator { lo, hi } => Ok(if x >= *lo && x <= *hi { 1.0 } else { 0.0 }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: f64,
    pub w: f64,
}

/// Finitely supported probability measure on the real line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralMeasure {
    pub atoms: Vec<Atom>,
}

impl SpectralMeasure {
    pub fn support(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.x).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.w).sum()
    }

    /// `∫ x^k dμ`.
    pub fn moment(&self, k: u32) -> f64 {
        self.atoms.iter().map(|a| a.x.powi(k as i32) * a.w).sum()
    }

    /// `∫ f dμ`.
    pub fn integrate(&self, f: &FnSpec) -> Result<f64> {
        self.atoms.iter().map(|a| Ok(f.eval(a.x)? * a.w)).sum()
    }
}

/// Left-multiplication representation `b ↦ a b` on `L₂(alg)`.
#[derive(Debug, Clone)]
pub struct GnsRep {
    /// Orthonormal system of `L₂(alg)`, as algebra elements.
    pub cons: Vec<Element>,
    /// `L_a[i][j] = ⟨a·cons_j, cons_i⟩₂`.
    pub matrix: CMatrix,
}

impl GnsRep {
    pub fn dim(&self) -> usize {
        self.cons.len()
    }

    /// Largest singular value of `L_a`.
    pub fn operator_norm(&self) -> f64 {
        if self.matrix.is_empty() {
            return 0.0;
        }
        self.matrix
            .clone()
            .singular_values()
            .iter()
            .fold(0.0, |m: f64, &s| m.max(s))
    }
}

/// Checks that `a` is self-adjoint and returns its Hermitian part.
fn observable(alg: &ProbAlgebra, a: &Element) -> Result<Element> {
    let flags = alg.classify(a, DEFAULT_TOL)?;
    if !flags.self_adjoint {
        return Err(Error::NotObservable(format!(
            "residual {:e} exceeds {DEFAULT_TOL:e}",
            a.max_diff(&a.adjoint())
        )));
    }
    if let Element::Function(v) = a {
        if let Some(z) = v.iter().find(|z| z.im.abs() > REAL_RESIDUE) {
            return Err(Error::NotObservable(format!("imaginary part {:e}", z.im)));
        }
    }
    Ok(a.hermitian_part())
}

/// Eigenvalue clusters of a self-adjoint matrix: `(mean eigenvalue, columns)`.
fn eigenspaces(m: &CMatrix) -> (Vec<(f64, std::ops::Range<usize>)>, CMatrix) {
    let (vals, vecs) = hermitian_eigh(m);
    let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let groups = clusters(&vals, MERGE_TOL * (1.0 + scale))
        .into_iter()
        .map(|r| {
            let mean = vals[r.clone()].iter().sum::<f64>() / r.len() as f64;
            (mean, r)
        })
        .collect();
    (groups, vecs)
}

/// Distinct points of the spectrum, ascending.
///
/// Function model: the exact value set. Matrix model: eigenvalues with
/// near-coincident ones (relative gap below [`MERGE_TOL`]) merged.
pub fn spectrum(alg: &ProbAlgebra, a: &Element) -> Result<Vec<f64>> {
    Ok(match observable(alg, a)? {
        Element::Function(v) => {
            let mut xs: Vec<f64> = v.iter().map(|z| z.re).collect();
            xs.sort_by(f64::total_cmp);
            xs.dedup();
            xs
        }
        Element::Matrix(m) => eigenspaces(&m).0.into_iter().map(|(x, _)| x).collect(),
    })
}

/// Eigenvalues with multiplicity, ascending.
pub fn eigenvalues(alg: &ProbAlgebra, a: &Element) -> Result<Vec<f64>> {
    Ok(match observable(alg, a)? {
        Element::Function(v) => {
            let mut xs: Vec<f64> = v.iter().map(|z| z.re).collect();
            xs.sort_by(f64::total_cmp);
            xs
        }
        Element::Matrix(m) => hermitian_eigh(&m).0,
    })
}

/// `f(a)` by spectral calculus.
pub fn apply_fn(alg: &ProbAlgebra, a: &Element, f: &FnSpec) -> Result<Element> {
    let a = observable(alg, a)?;
    if matches!(f, FnSpec::Sqrt) && !alg.classify(&a, DEFAULT_TOL)?.positive {
        return Err(Error::DomainError("sqrt of an element that is not positive".into()));
    }
    let scale = 1.0 + a.max_abs();
    // rounding-level negative eigenvalues of a positive element are clamped for sqrt
    let eval = |x: f64| -> Result<f64> {
        match f {
            FnSpec::Sqrt if x < 0.0 && x >= -DEFAULT_TOL * scale => Ok(0.0),
            _ => f.eval(x),
        }
    };
    match a {
        Element::Function(v) => {
            let out: Result<Vec<Complex64>> = v.iter().map(|z| Ok(Complex64::new(eval(z.re)?, 0.0))).collect();
            Ok(Element::from_complex(out?))
        }
        Element::Matrix(m) => {
            let (vals, vecs) = hermitian_eigh(&m);
            let fvals: Result<Vec<Complex64>> = vals.iter().map(|&x| Ok(Complex64::new(eval(x)?, 0.0))).collect();
            let d = CMatrix::from_diagonal(&CVector::from_vec(fvals?));
            let r = &vecs * d * vecs.adjoint();
            Ok(Element::Matrix((&r + r.adjoint()).scale(0.5)))
        }
    }
}

/// `|a| = (a* a)^{1/2}` for an arbitrary element.
pub fn abs_element(alg: &ProbAlgebra, a: &Element) -> Result<Element> {
    let ata = a.adjoint().mul(a)?;
    apply_fn(alg, &ata, &FnSpec::Sqrt)
}

/// `‖a‖_p = E[|a|^p]^{1/p}`; `p = ∞` gives the operator norm of `L_a`.
pub fn lp_norm(alg: &ProbAlgebra, a: &Element, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::BadExponent(p));
    }
    alg.check_member(a)?;
    if p.is_infinite() {
        return Ok(gns_rep(alg, a)?.operator_norm());
    }
    // |a|^p = (a* a)^{p/2}
    let ata = a.adjoint().mul(a)?.hermitian_part();
    let abs_p = apply_fn(alg, &ata, &FnSpec::Power { p: p / 2.0 });
    let abs_p = match abs_p {
        Ok(x) => x,
        // a*a can carry rounding-level negative eigenvalues
        Err(Error::DomainError(_)) => {
            let root = apply_fn(alg, &ata, &FnSpec::Sqrt)?;
            apply_fn(alg, &root, &FnSpec::Power { p })?
        }
        Err(e) => return Err(e),
    };
    let e = alg.expectation(&abs_p)?.re.max(0.0);
    Ok(e.powf(1.0 / p))
}

/// Law of an observable: atoms at its spectrum, weights `E[P_λ]`.
pub fn law(alg: &ProbAlgebra, a: &Element) -> Result<SpectralMeasure> {
    let a = observable(alg, a)?;
    let atoms = match (&a, alg.weights(), alg.density()) {
        (Element::Function(v), Some(weights), _) => {
            let mut pairs: Vec<(f64, f64)> = v.iter().zip(weights).map(|(z, &w)| (z.re, w)).collect();
            pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
            let mut atoms: Vec<Atom> = Vec::new();
            for (x, w) in pairs {
                match atoms.last_mut() {
                    Some(last) if last.x == x => last.w += w,
                    _ => atoms.push(Atom { x, w }),
                }
            }
            atoms
        }
        (Element::Matrix(m), _, Some(rho)) => {
            let (groups, vecs) = eigenspaces(m);
            groups
                .into_iter()
                .map(|(x, cols)| {
                    let w: f64 = cols
                        .map(|k| {
                            let v = vecs.column(k);
                            (v.adjoint() * rho * v)[(0, 0)].re
                        })
                        .sum();
                    Atom { x, w: w.max(0.0) }
                })
                .collect()
        }
        _ => unreachable!("membership checked by classify"),
    };
    Ok(SpectralMeasure { atoms })
}

/// Orthonormalises `elems` under `⟨·,·⟩₂` by modified Gram-Schmidt,
/// dropping vectors that are numerically dependent. Sweeps are repeated
/// while the loss of orthogonality exceeds `REORTH_TOL`.
pub fn gram_schmidt(alg: &ProbAlgebra, elems: &[Element]) -> Result<Vec<Element>> {
    let mut basis = mgs_sweep(alg, elems, true)?;
    for _ in 0..3 {
        if orthogonality_loss(alg, &basis)? <= REORTH_TOL {
            break;
        }
        basis = mgs_sweep(alg, &basis, false)?;
    }
    Ok(basis)
}

fn mgs_sweep(alg: &ProbAlgebra, elems: &[Element], drop_dependent: bool) -> Result<Vec<Element>> {
    let mut out: Vec<Element> = Vec::with_capacity(elems.len());
    for e in elems {
        let before = alg.norm2_sq(e)?.sqrt();
        let mut v = e.clone();
        for u in &out {
            let proj = alg.inner2(&v, u)?;
            v = v.sub(&u.scale(proj))?;
        }
        let norm = alg.norm2_sq(&v)?.sqrt();
        if drop_dependent && norm <= 1e-10 * before.max(f64::MIN_POSITIVE) {
            continue;
        }
        if norm == 0.0 {
            continue;
        }
        out.push(v.scale(Complex64::new(1.0 / norm, 0.0)));
    }
    Ok(out)
}

fn orthogonality_loss(alg: &ProbAlgebra, basis: &[Element]) -> Result<f64> {
    let mut worst = 0.0f64;
    for (i, x) in basis.iter().enumerate() {
        for (j, y) in basis.iter().enumerate().skip(i) {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((alg.inner2(x, y)? - target).norm());
        }
    }
    Ok(worst)
}

/// GNS representation of `a` in the orthonormalised canonical basis.
pub fn gns_rep(alg: &ProbAlgebra, a: &Element) -> Result<GnsRep> {
    alg.check_member(a)?;
    let cons = gram_schmidt(alg, &alg.canonical_basis())?;
    let d = cons.len();
    let images: Vec<Element> = cons.iter().map(|u| a.mul(u)).collect::<Result<_>>()?;
    let mut matrix = CMatrix::zeros(d, d);
    for j in 0..d {
        for i in 0..d {
            matrix[(i, j)] = alg.inner2(&images[j], &cons[i])?;
        }
    }
    Ok(GnsRep { cons, matrix })
}

/// Coordinates `⟨b, cons_i⟩₂` of `b` in a GNS orthonormal system.
pub fn gns_coords(alg: &ProbAlgebra, rep: &GnsRep, b: &Element) -> Result<CVector> {
    let coords: Result<Vec<Complex64>> = rep.cons.iter().map(|u| alg.inner2(b, u)).collect();
    Ok(CVector::from_vec(coords?))
}

/// Largest singular value of a square complex matrix.
pub fn max_singular_value(m: &DMatrix<Complex64>) -> f64 {
    m.clone().singular_values().iter().fold(0.0, |a: f64, &s| a.max(s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{make_algebra, AlgebraSpec};

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn fun(w: &[f64]) -> ProbAlgebra {
        make_algebra(&AlgebraSpec::function(w.to_vec())).unwrap()
    }

    fn mat_diag(d: &[f64]) -> ProbAlgebra {
        let rho = CMatrix::from_diagonal(&CVector::from_iterator(d.len(), d.iter().map(|&x| c(x))));
        make_algebra(&AlgebraSpec::matrix(&rho)).unwrap()
    }

    fn m2(a: [f64; 4]) -> Element {
        Element::from_real_matrix(&DMatrix::from_row_slice(2, 2, &a))
    }

    #[test]
    fn spectrum_examples() {
        let f = fun(&[0.2, 0.3, 0.5]);
        assert_eq!(spectrum(&f, &Element::from_real(&[1.0, 3.0, 1.0])).unwrap(), vec![1.0, 3.0]);
        assert_eq!(spectrum(&f, &f.unit()).unwrap(), vec![1.0]);
        let m = mat_diag(&[0.5, 0.5]);
        let s = spectrum(&m, &m2([0.0, 1.0, 1.0, 0.0])).unwrap();
        assert!((s[0] + 1.0).abs() < 1e-14 && (s[1] - 1.0).abs() < 1e-14);
        let s = spectrum(&m, &m.unit()).unwrap();
        assert_eq!(s.len(), 1);
        assert!((s[0] - 1.0).abs() < 1e-14);
        assert_eq!(eigenvalues(&m, &m.unit()).unwrap().len(), 2);
        assert!(matches!(
            spectrum(&m, &m2([0.0, 1.0, 0.0, 0.0])),
            Err(Error::NotObservable(_))
        ));
    }

    #[test]
    fn apply_fn_examples() {
        let f = fun(&[0.5, 0.5]);
        let r = apply_fn(&f, &Element::from_real(&[4.0, 9.0]), &FnSpec::Sqrt).unwrap();
        assert_eq!(r, Element::from_real(&[2.0, 3.0]));

        let m = mat_diag(&[0.5, 0.5]);
        let a = m2([1.0, 0.5, 0.5, 1.0]);
        let s = apply_fn(&m, &a, &FnSpec::Sqrt).unwrap();
        assert!(s.mul(&s).unwrap().max_diff(&a) < 1e-10);

        let nil = m2([0.0, 1.0, 0.0, 0.0]);
        let abs = abs_element(&m, &nil).unwrap();
        assert!(abs.max_diff(&m2([0.0, 0.0, 0.0, 1.0])) < 1e-12);

        let id = apply_fn(&m, &a, &FnSpec::identity()).unwrap();
        assert!(id.max_diff(&a) < 1e-10);
    }

    #[test]
    fn apply_fn_domain_errors() {
        let f = fun(&[0.5, 0.5]);
        let neg = Element::from_real(&[-1.0, 4.0]);
        assert!(matches!(apply_fn(&f, &neg, &FnSpec::Sqrt), Err(Error::DomainError(_))));
        assert!(matches!(
            apply_fn(&f, &neg, &FnSpec::Power { p: 0.5 }),
            Err(Error::DomainError(_))
        ));
        let cube = apply_fn(&f, &neg, &FnSpec::Power { p: 3.0 }).unwrap();
        assert_eq!(cube, Element::from_real(&[-1.0, 64.0]));
        assert!(matches!(
            apply_fn(&f, &neg, &FnSpec::Power { p: -1.0 }),
            Err(Error::DomainError(_))
        ));
        let ind = apply_fn(&f, &neg, &FnSpec::Indicator { lo: 0.0, hi: 10.0 }).unwrap();
        assert_eq!(ind, Element::from_real(&[0.0, 1.0]));
    }

    #[test]
    fn lp_norm_examples() {
        let f = fun(&[0.5, 0.5]);
        let a = Element::from_real(&[3.0, 4.0]);
        assert!((lp_norm(&f, &a, 2.0).unwrap() - 12.5f64.sqrt()).abs() < 1e-14);
        assert!((lp_norm(&f, &a, f64::INFINITY).unwrap() - 4.0).abs() < 1e-12);
        for p in [1.0, 1.5, 2.0, 7.0, f64::INFINITY] {
            assert!((lp_norm(&f, &f.unit(), p).unwrap() - 1.0).abs() < 1e-12);
        }
        assert!(matches!(lp_norm(&f, &a, 0.5), Err(Error::BadExponent(_))));
        assert!(matches!(lp_norm(&f, &a, f64::NAN), Err(Error::BadExponent(_))));
    }

    #[test]
    fn lp_norm_matrix_monotone() {
        let m = mat_diag(&[0.7, 0.2, 0.1]);
        let a = Element::from_real_matrix(&DMatrix::from_row_slice(
            3,
            3,
            &[1.0, -2.0, 0.5, 0.3, 0.0, 1.0, 2.0, 1.0, -1.0],
        ));
        let mut last = 0.0;
        for p in [1.0, 1.5, 2.0, 3.0, 8.0, f64::INFINITY] {
            let n = lp_norm(&m, &a, p).unwrap();
            assert!(n + 1e-10 >= last, "p={p}: {n} < {last}");
            last = n;
        }
        let Element::Matrix(raw) = &a else { unreachable!() };
        assert!((last - max_singular_value(raw)).abs() < 1e-9);
    }

    #[test]
    fn law_examples() {
        let m = mat_diag(&[0.75, 0.25]);
        let mu = law(&m, &m2([1.0, 0.0, 0.0, -1.0])).unwrap();
        assert_eq!(mu.atoms.len(), 2);
        assert!((mu.atoms[0].x + 1.0).abs() < 1e-14 && (mu.atoms[0].w - 0.25).abs() < 1e-14);
        assert!((mu.atoms[1].x - 1.0).abs() < 1e-14 && (mu.atoms[1].w - 0.75).abs() < 1e-14);
        assert!((mu.moment(1) - 0.5).abs() < 1e-14);

        let f = fun(&[0.5, 0.5]);
        let dirac = law(&f, &Element::from_real(&[2.0, 2.0])).unwrap();
        assert_eq!(dirac.atoms, vec![Atom { x: 2.0, w: 1.0 }]);

        // E[Q(a)] against a brute-force sum over atoms, Q(x) = x²
        let f3 = fun(&[0.2, 0.3, 0.5]);
        let a = Element::from_real(&[-1.0, 2.0, -1.0]);
        let q = FnSpec::Poly { coeffs: vec![0.0, 0.0, 1.0] };
        let lhs = f3.expectation(&apply_fn(&f3, &a, &q).unwrap()).unwrap().re;
        let mu = law(&f3, &a).unwrap();
        let brute: f64 = mu.atoms.iter().map(|at| at.x * at.x * at.w).sum();
        assert!((lhs - brute).abs() < 1e-14);
        assert!((brute - (0.7 + 0.3 * 4.0)).abs() < 1e-14);
    }

    #[test]
    fn law_merges_degenerate_eigenvalues() {
        let m = mat_diag(&[0.5, 0.3, 0.2]);
        let a = Element::from_real_matrix(&DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            2.0, 2.0, -1.0,
        ])));
        let mu = law(&m, &a).unwrap();
        assert_eq!(mu.atoms.len(), 2);
        assert!((mu.atoms[1].w - 0.8).abs() < 1e-14);
        assert_eq!(mu.support(), spectrum(&m, &a).unwrap());
    }

    #[test]
    fn spectral_measure_json() {
        let mu = SpectralMeasure {
            atoms: vec![Atom { x: -1.0, w: 0.25 }, Atom { x: 1.0, w: 0.75 }],
        };
        let s = serde_json::to_string(&mu).unwrap();
        assert_eq!(s, r#"{"atoms":[{"x":-1.0,"w":0.25},{"x":1.0,"w":0.75}]}"#);
        let f: FnSpec = serde_json::from_str(r#"{"fn":"poly","coeffs":[1,2]}"#).unwrap();
        assert_eq!(f, FnSpec::Poly { coeffs: vec![1.0, 2.0] });
        assert_eq!(serde_json::to_string(&FnSpec::Sqrt).unwrap(), r#"{"fn":"sqrt"}"#);
    }

    #[test]
    fn gns_examples() {
        let f = fun(&[0.2, 0.3, 0.5]);
        let a = Element::from_real(&[1.0, -4.0, 2.5]);
        let rep = gns_rep(&f, &a).unwrap();
        assert_eq!(rep.dim(), 3);
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { [1.0, -4.0, 2.5][i] } else { 0.0 };
                assert!((rep.matrix[(i, j)] - c(expected)).norm() < 1e-12);
            }
        }
        assert!((rep.operator_norm() - 4.0).abs() < 1e-12);

        let m = mat_diag(&[0.9, 0.1]);
        let rep = gns_rep(&m, &m.unit()).unwrap();
        assert_eq!(rep.dim(), 4);
        assert!((&rep.matrix - CMatrix::identity(4, 4)).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn gns_state_is_vector_state_of_unit() {
        let m = mat_diag(&[0.6, 0.3, 0.1]);
        let a = Element::Matrix(CMatrix::from_fn(3, 3, |r, k| Complex64::new((r + 2 * k) as f64, r as f64 - k as f64)));
        let rep = gns_rep(&m, &a).unwrap();
        let u0 = gns_coords(&m, &rep, &m.unit()).unwrap();
        let via_gns = (u0.adjoint() * &rep.matrix * &u0)[(0, 0)];
        assert!((via_gns - m.expectation(&a).unwrap()).norm() < 1e-10);
    }
}
