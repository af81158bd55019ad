mod common;

use common::*;
use proptest::prelude::*;
use qsd_core::linalg::*;
use qsd_core::C64;

/// Characteristic polynomial coefficients `c_0..c_n` (`c_n = 1`) by the
/// Faddeev–LeVerrier recursion.
fn faddeev_leverrier(a: &ComplexMatrix) -> Vec<C64> {
    let n = a.rows();
    let mut coeffs = vec![c(0.0, 0.0); n + 1];
    coeffs[n] = c(1.0, 0.0);
    let mut m = ComplexMatrix::zeros(n, n);
    for k in 1..=n {
        let mut next = a * &m;
        next.add_scaled(&ComplexMatrix::identity(n), coeffs[n - k + 1]);
        m = next;
        coeffs[n - k] = -(a * &m).trace() / k as f64;
    }
    coeffs
}

fn eval(coeffs: &[C64], x: f64) -> (C64, f64) {
    let mut v = c(0.0, 0.0);
    let mut scale = 0.0;
    for (i, ci) in coeffs.iter().enumerate() {
        v += ci * x.powi(i as i32);
        scale += ci.norm() * x.abs().powi(i as i32);
    }
    (v, scale)
}

proptest! {
    #[test]
    fn eigenvalues_are_characteristic_roots(d in 1usize..=6, raw in entries(36)) {
        let h = hermitian_from(d, &raw);
        let eig = hermitian_eigen(&h, &Tolerances::default()).unwrap();
        let poly = faddeev_leverrier(&h);
        for &lam in &eig.values {
            let (v, scale) = eval(&poly, lam);
            prop_assert!(v.norm() <= 1e-11 * scale.max(1.0), "p({lam}) = {v}");
        }
        // Power sums pin down the multiset.
        let powers = h.powers(d);
        for m in 1..=d {
            let ps: f64 = eig.values.iter().map(|x| x.powi(m as i32)).sum();
            let tr = powers[m].trace().re;
            prop_assert!((ps - tr).abs() <= 1e-10 * (1.0 + tr.abs()));
        }
        prop_assert!(eig.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn eigenvectors_reconstruct(d in 1usize..=6, raw in entries(36)) {
        let h = hermitian_from(d, &raw);
        let eig = hermitian_eigen(&h, &Tolerances::default()).unwrap();
        prop_assert!((&eig.reconstruct() - &h).max_abs() < 1e-12);
        let vv = &eig.vectors.adjoint() * &eig.vectors;
        prop_assert!((&vv - &ComplexMatrix::identity(d)).max_abs() < 1e-12);
    }

    #[test]
    fn random_states_validate(d in 1usize..=6, raw in entries(36)) {
        let rho = density_from(d, &raw);
        let tol = Tolerances::default();
        prop_assert!(validate_density(rho.matrix().clone(), &tol).is_ok());
        prop_assert!((rho.trace().re - 1.0).abs() < 1e-12);
        let traces = power_traces(&rho, 6);
        for m in 2..=6 {
            prop_assert!(traces[m] <= traces[m - 1] + 1e-14);
        }
    }

    #[test]
    fn partial_trace_of_two_by_three(raw in entries(6)) {
        let norm = raw.iter().map(|(a, b)| a * a + b * b).sum::<f64>().sqrt();
        prop_assume!(norm > 1e-3);
        let psi: Vec<C64> = raw.iter().map(|&(a, b)| c(a / norm, b / norm)).collect();
        let reduced = partial_trace_pure(&psi, 2, 3).unwrap();
        let full = partial_trace(&DensityMatrix::pure(&psi), 2, 3).unwrap();
        prop_assert!((&*reduced - &*full).max_abs() < 1e-15);
        // Closed-form 2×2 eigenvalues of M M† with M the 2×3 coefficient matrix.
        let m = |i: usize, j: usize| psi[i * 3 + j];
        let g = |i: usize, k: usize| (0..3).map(|j| m(i, j) * m(k, j).conj()).sum::<C64>();
        let t = (g(0, 0) + g(1, 1)).re;
        let det = (g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0)).re;
        let disc = (t * t - 4.0 * det).max(0.0).sqrt();
        let expected = [(t + disc) / 2.0, (t - disc) / 2.0];
        let got = hermitian_eigenvalues(&reduced, &Tolerances::default()).unwrap();
        for (a, b) in got.iter().zip(expected) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn purification_round_trip(d in 1usize..=4, raw in entries(16)) {
        let rho = density_from(d, &raw);
        let (psi, env) = purify(&rho, &Tolerances::default()).unwrap();
        let back = partial_trace_pure(&psi, d, env).unwrap();
        prop_assert!(frobenius_distance(&back, &rho) < 1e-12);
    }

    #[test]
    fn resolvent_matches_inverse(d in 1usize..=4, raw in entries(16), x in -0.9f64..0.9) {
        let rho = density_from(d, &raw);
        let r = resolvent_trace(&rho, x, &Tolerances::default()).unwrap();
        let bound = resolvent_tail_bound(d, x, 400);
        let series: f64 = power_traces(&rho, 400).iter().enumerate().map(|(m, t)| x.powi(m as i32) * t).sum();
        prop_assert!((r - series).abs() <= bound + 1e-12);
    }
}

#[test]
fn invalid_states_are_reported_by_name() {
    let tol = Tolerances::default();
    let bad = ComplexMatrix::from_diagonal(&[1.2, -0.2]);
    match validate_density(bad, &tol) {
        Err(LinalgError::InvalidDensity(report)) => {
            let min = report.has_negative_eigenvalue().unwrap();
            assert!((min + 0.2).abs() < 1e-12);
        }
        other => panic!("{other:?}"),
    }
    let m = ComplexMatrix::from_rows(&[[c(0.5, 0.0), c(0.1, 0.0)], [c(0.0, 0.0), c(0.6, 0.0)]]);
    let err = validate_density(m, &tol).unwrap_err().to_string();
    assert!(err.contains("Hermitian") || err.contains("hermitian"), "{err}");
    assert!(err.contains("trace"), "{err}");
}
