mod common;

use common::*;
use proptest::prelude::*;
use qsd_core::linalg::*;
use qsd_core::spectrum::*;

fn moments_of(rho: &ComplexMatrix, d: usize) -> Vec<f64> {
    power_traces(rho, d)[1..].to_vec()
}

proptest! {
    #[test]
    fn reconstruction_round_trip(d in 1usize..=6, raw in entries(36)) {
        let tol = Tolerances::default();
        let rho = density_from(d, &raw);
        let expected = ordered_spectrum(&rho, &tol).unwrap();
        let got = spectrum_from_moments(&moments_of(&rho, d), d, &tol).unwrap();
        for (a, b) in got.iter().zip(&expected) {
            prop_assert!((a - b).abs() < 1e-8, "{got:?} vs {expected:?}");
        }
    }

    #[test]
    fn reconstruction_with_degenerate_spectrum(raw in entries(16), split in 0.05f64..0.45) {
        let tol = Tolerances::default();
        let spectrum = [0.5 - split / 2.0, 0.5 - split / 2.0, split / 2.0, split / 2.0];
        let rho = density_with_spectrum(&spectrum, &raw);
        let got = spectrum_from_moments(&moments_of(&rho, 4), 4, &tol).unwrap();
        let mut want = spectrum.to_vec();
        want.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in got.iter().zip(&want) {
            prop_assert!((a - b).abs() < 1e-8, "{got:?}");
        }
    }

    #[test]
    fn rows_are_sorted_and_sum_to_one(d in 1usize..=6, raw in entries(36)) {
        let rho = density_from(d, &raw);
        let p = ordered_spectrum(&rho, &Tolerances::default()).unwrap();
        prop_assert!(p.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn moment_measure_identity(d in 1usize..=6, raw in entries(36)) {
        let tol = Tolerances::default();
        let rho = density_from(d, &raw);
        let mu = moment_measure(&rho, &tol).unwrap();
        prop_assert!((mu.total_mass() - 1.0).abs() < 1e-9);
        for m in 1..=6u32 {
            let want = trace_moment(&rho, m + 1).unwrap();
            prop_assert!((mu.moment(m) - want).abs() < 1e-10);
        }
    }

    #[test]
    fn weak_distance_is_a_symmetric_semimetric(a in entries(9), b in entries(9)) {
        let tol = Tolerances::default();
        let ma = moment_measure(&density_from(3, &a), &tol).unwrap();
        let mb = moment_measure(&density_from(3, &b), &tol).unwrap();
        let ab = weak_distance(&ma, &mb, &tol).unwrap();
        prop_assert_eq!(ab, weak_distance(&mb, &ma, &tol).unwrap());
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(weak_distance(&ma, &ma, &tol).unwrap(), 0.0);
    }
}

#[test]
fn stabilization_is_consistent_for_a_settled_trace() {
    let mut trace = SpectrumTrace::new();
    let mut moments = Vec::new();
    for k in 0..50 {
        let eps = 1e-5 * (k as f64 * 0.7).sin();
        let row = vec![0.6 + eps, 0.3, 0.1 - eps];
        moments.push((2..=3).map(|m| row.iter().map(|p: &f64| p.powi(m)).sum()).collect());
        trace.push(k as f64, row);
    }
    let r = stabilization_check(&trace, &moments, 10, CONV_TOL).unwrap();
    assert!(r.moments_stable && r.consistent);
    assert!(r.spectrum_oscillation > 0.0);
}

#[test]
fn limit_spectrum_from_a_converged_trace() {
    let mut trace = SpectrumTrace::new();
    for k in 0..20 {
        trace.push(k as f64, vec![0.5, 0.25, 0.25]);
    }
    let report = convergence_diagnostic(&trace, default_tail_window(trace.len())).unwrap();
    assert!(report.converged(CONV_TOL));
    let limits = LimitSpectrum::from_limits(&report.limits, CONV_TOL);
    assert_eq!(limits.multiplicities(), &[1, 2]);
    assert!(mass_deficit(&limits).abs() <= CONV_TOL);
}
