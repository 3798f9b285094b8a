mod common;

use klfactor::spectral::{self, FnSpec};
use proptest::prelude::*;

use common::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn moment_identity(seed: u64, matrix: bool, n in 1usize..=5) {
        let mut r = rng(seed);
        let alg = algebra(&mut r, matrix, n);
        let a = self_adjoint(&mut r, &alg);
        let law = spectral::law(&alg, &a).unwrap();
        for k in 0..=6u32 {
            let direct = oracle_expectation(&alg, &a.pow(k)).re;
            prop_assert!((law.moment(k) - direct).abs() <= 1e-9 * (1.0 + direct.abs()), "k={k}");
        }
    }

    #[test]
    fn spectral_calculus_consistency(seed: u64, matrix: bool, n in 1usize..=5) {
        let mut r = rng(seed);
        let alg = algebra(&mut r, matrix, n);
        let a = self_adjoint(&mut r, &alg);
        let coeffs: Vec<f64> = (0..4).map(|_| unif(&mut r)).collect();
        let eig = spectral::eigenvalues(&alg, &a).unwrap();
        for f in [FnSpec::Exp, FnSpec::Poly { coeffs }] {
            let fa = spectral::apply_fn(&alg, &a, &f).unwrap();
            let got = sorted(spectral::eigenvalues(&alg, &fa).unwrap());
            let want = sorted(eig.iter().map(|&x| f.eval(x).unwrap()).collect());
            prop_assert_eq!(got.len(), want.len());
            for (g, w) in got.iter().zip(&want) {
                prop_assert!((g - w).abs() < 1e-9 * (1.0 + w.abs()), "{f:?}: {got:?} vs {want:?}");
            }
        }
    }

    #[test]
    fn operator_norm_law(seed: u64, matrix: bool, n in 1usize..=5) {
        let mut r = rng(seed);
        let alg = algebra(&mut r, matrix, n);
        let a = self_adjoint(&mut r, &alg);
        let top = spectral::spectrum(&alg, &a).unwrap().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let inf = spectral::lp_norm(&alg, &a, f64::INFINITY).unwrap();
        prop_assert!((inf - top).abs() < 1e-9 * (1.0 + top));
    }

    #[test]
    fn gns_vector_state(seed: u64, matrix: bool, n in 1usize..=4) {
        let mut r = rng(seed);
        let alg = algebra(&mut r, matrix, n);
        let a = element(&mut r, &alg);
        let rep = spectral::gns_rep(&alg, &a).unwrap();
        let u0 = spectral::gns_coords(&alg, &rep, &alg.unit()).unwrap();
        let val = (u0.adjoint() * &rep.matrix * &u0)[(0, 0)];
        prop_assert!((val - oracle_expectation(&alg, &a)).norm() < 1e-10);
    }

    #[test]
    fn sqrt_then_square(seed: u64, matrix: bool, n in 1usize..=5) {
        let mut r = rng(seed);
        let alg = algebra(&mut r, matrix, n);
        let a = positive(&mut r, &alg);
        let root = spectral::apply_fn(&alg, &a, &FnSpec::Sqrt).unwrap();
        let back = spectral::apply_fn(&alg, &root, &FnSpec::Power { p: 2.0 }).unwrap();
        prop_assert!(back.max_diff(&a) < 1e-8);
    }

    #[test]
    fn lp_norms_increase_with_p(seed: u64, matrix: bool, n in 1usize..=5) {
        let mut r = rng(seed);
        let alg = algebra(&mut r, matrix, n);
        let a = element(&mut r, &alg);
        let ps = [1.0, 1.5, 2.0, 3.0, 8.0, f64::INFINITY];
        let norms: Vec<f64> = ps.iter().map(|&p| spectral::lp_norm(&alg, &a, p).unwrap()).collect();
        for w in norms.windows(2) {
            prop_assert!(w[0] <= w[1] * (1.0 + 1e-12) + 1e-14, "{norms:?}");
        }
        let two = spectral::lp_norm(&alg, &a, 2.0).unwrap();
        prop_assert!((two * two - alg.norm2_sq(&a).unwrap()).abs() < 1e-12 * (1.0 + two * two));
    }

    #[test]
    fn law_is_a_probability_measure(seed: u64, matrix: bool, n in 1usize..=5) {
        let mut r = rng(seed);
        let alg = algebra(&mut r, matrix, n);
        let a = self_adjoint(&mut r, &alg);
        let law = spectral::law(&alg, &a).unwrap();
        prop_assert!((law.total_mass() - 1.0).abs() < 1e-12);
        prop_assert!(law.atoms.iter().all(|at| at.w > 0.0));
        prop_assert_eq!(law.support(), spectral::spectrum(&alg, &a).unwrap());
    }

    #[test]
    fn indicator_of_spectrum_is_a_projection(seed: u64, matrix: bool, n in 2usize..=5) {
        let mut r = rng(seed);
        let alg = algebra(&mut r, matrix, n);
        let a = self_adjoint(&mut r, &alg);
        let spec = spectral::spectrum(&alg, &a).unwrap();
        let cut = spec[spec.len() / 2];
        let p = spectral::apply_fn(&alg, &a, &FnSpec::Indicator { lo: f64::NEG_INFINITY, hi: cut }).unwrap();
        prop_assert!(p.mul(&p).unwrap().max_diff(&p) < 1e-10);
        let flags = alg.classify(&p, 1e-9).unwrap();
        prop_assert!(flags.projection);
        // probability of the event equals the law's mass below the cut
        let mass: f64 = spectral::law(&alg, &a).unwrap().atoms.iter().filter(|at| at.x <= cut).map(|at| at.w).sum();
        prop_assert!((alg.expectation(&p).unwrap().re - mass).abs() < 1e-10);
    }
}

#[test]
fn gns_multiplicative_on_function_model() {
    let mut r = rng(3);
    let alg = function_algebra(&mut r, 4);
    let a = element(&mut r, &alg);
    let b = element(&mut r, &alg);
    let la = spectral::gns_rep(&alg, &a).unwrap().matrix;
    let lb = spectral::gns_rep(&alg, &b).unwrap().matrix;
    let lab = spectral::gns_rep(&alg, &a.mul(&b).unwrap()).unwrap().matrix;
    assert!((&la * &lb - lab).camax() < 1e-12);
}
