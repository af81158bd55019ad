#![allow(dead_code)]

use proptest::prelude::*;
use qsd_core::linalg::{validate_density, ComplexMatrix, DensityMatrix, Tolerances};
use qsd_core::trajectory::ModelOperators;
use qsd_core::C64;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn matrix_from(d: usize, raw: &[(f64, f64)]) -> ComplexMatrix {
    ComplexMatrix::new(d, d, raw[..d * d].iter().map(|&(a, b)| c(a, b)).collect()).unwrap()
}

pub fn entries(n: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n)
}

/// `G G† / Tr` for a square `G`, plus a small multiple of the identity so
/// the result is safely full rank.
pub fn density_from(d: usize, raw: &[(f64, f64)]) -> DensityMatrix {
    let g = matrix_from(d, raw);
    let mut m = &g * &g.adjoint();
    m.add_scaled(&ComplexMatrix::identity(d), c(1e-3, 0.0));
    let tr = m.trace().re;
    validate_density(m.scale_real(1.0 / tr).hermitize(), &Tolerances::default()).unwrap()
}

pub fn hermitian_from(d: usize, raw: &[(f64, f64)]) -> ComplexMatrix {
    matrix_from(d, raw).hermitize()
}

pub fn random_model(d: usize, k: usize, raw: &[(f64, f64)]) -> ModelOperators {
    let h = hermitian_from(d, &raw[..d * d]);
    let ls = (0..k)
        .map(|i| matrix_from(d, &raw[(i + 1) * d * d..(i + 2) * d * d]))
        .collect();
    ModelOperators::new(h, ls, &Tolerances::default()).unwrap()
}

/// A density matrix with a prescribed spectrum in a random basis.
pub fn density_with_spectrum(spectrum: &[f64], raw: &[(f64, f64)]) -> DensityMatrix {
    let d = spectrum.len();
    let u = unitary_from(d, raw);
    let m = &(&u * &ComplexMatrix::from_diagonal(spectrum)) * &u.adjoint();
    validate_density(m.hermitize(), &Tolerances::default()).unwrap()
}

/// Gram–Schmidt on the columns of a random matrix.
pub fn unitary_from(d: usize, raw: &[(f64, f64)]) -> ComplexMatrix {
    let g = matrix_from(d, raw);
    let mut cols: Vec<Vec<C64>> = Vec::new();
    for j in 0..d {
        let mut v: Vec<C64> = (0..d).map(|i| g[(i, j)] + if i == j { c(2.0, 0.0) } else { c(0.0, 0.0) }).collect();
        for u in &cols {
            let proj: C64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (x, y) in v.iter_mut().zip(u) {
                *x -= proj * y;
            }
        }
        let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        cols.push(v.into_iter().map(|z| z / n).collect());
    }
    let mut u = ComplexMatrix::zeros(d, d);
    for (j, col) in cols.iter().enumerate() {
        for i in 0..d {
            u[(i, j)] = col[i];
        }
    }
    u
}
