//! The GKSL generator and its exact semigroup.
//!
//! `L(ρ) = [ρ, iH] - Σ_k (ρ L_k†L_k + L_k†L_k ρ - 2 L_k ρ L_k†)`.
//!
//! Superoperators act on column-stacked matrices: `vec(ρ)[i + d j] = ρ_ij`,
//! so `A ρ B ↦ (Bᵀ ⊗ A) vec(ρ)`.

use alloc::vec::Vec;

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::linalg::{ComplexMatrix, DensityMatrix, LinalgError, Tolerances};
use crate::stats::jackknife_mean;
use crate::trajectory::{ModelOperators, TrajectoryRecord};

const I: C64 = C64::new(0.0, 1.0);

/// Minimum ensemble size for [`unraveling_check`].
pub const MIN_UNRAVELING_TRAJECTORIES: usize = 500;

/// Target accuracy of the matrix exponential.
pub const EXPM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LindbladError {
    #[error("time must be non-negative and finite, got {0}")]
    NegativeTime(f64),
    #[error("need at least {required} trajectories, got {found}")]
    TooFewTrajectories { found: usize, required: usize },
    #[error("records do not share one time grid (trajectory {0})")]
    GridMismatch(usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

fn check_dim(rho: &ComplexMatrix, ops: &ModelOperators) -> Result<(), LinalgError> {
    if !rho.is_square() {
        return Err(LinalgError::NotSquare {
            rows: rho.rows(),
            cols: rho.cols(),
        });
    }
    if rho.rows() != ops.dim() {
        return Err(LinalgError::DimensionMismatch {
            expected: ops.dim(),
            found: rho.rows(),
        });
    }
    Ok(())
}

/// Applies the generator once.
pub fn gksl_apply(rho: &ComplexMatrix, ops: &ModelOperators) -> Result<ComplexMatrix, LinalgError> {
    check_dim(rho, ops)?;
    let ih = ops.hamiltonian().scale(I);
    let mut out = &(rho * &ih) - &(&ih * rho);
    for l in ops.couplings() {
        let ld = l.adjoint();
        let k = &ld * l;
        out = &out - &(rho * &k);
        out = &out - &(&k * rho);
        out.add_scaled(&(&(l * rho) * &ld), C64::new(2.0, 0.0));
    }
    Ok(out)
}

/// Column-stacks a square matrix.
pub fn vectorize(m: &ComplexMatrix) -> Vec<C64> {
    let d = m.rows();
    let mut v = Vec::with_capacity(d * m.cols());
    for j in 0..m.cols() {
        for i in 0..d {
            v.push(m[(i, j)]);
        }
    }
    v
}

/// Inverse of [`vectorize`] for a `d × d` matrix.
pub fn unvectorize(v: &[C64], d: usize) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(d, d);
    for j in 0..d {
        for i in 0..d {
            m[(i, j)] = v[i + d * j];
        }
    }
    m
}

/// The generator as a `d² × d²` matrix on column-stacked states.
#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    dim: usize,
    matrix: ComplexMatrix,
}

/// Trace- and Hermiticity-preservation defects measured on the matrix-unit
/// basis `E_ij`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreservationDefects {
    /// `max_ij |Tr L(E_ij)|`.
    pub trace: f64,
    /// `max_ij ‖L(E_ij)† - L(E_ji)‖_max`.
    pub hermiticity: f64,
}

impl Superoperator {
    pub fn from_model(ops: &ModelOperators) -> Self {
        let d = ops.dim();
        let id = ComplexMatrix::identity(d);
        let ih = ops.hamiltonian().scale(I);
        let mut s = ih.transpose().kron(&id);
        s = &s - &id.kron(&ih);
        for l in ops.couplings() {
            let k = &l.adjoint() * l;
            s = &s - &k.transpose().kron(&id);
            s = &s - &id.kron(&k);
            s.add_scaled(&l.conj().kron(l), C64::new(2.0, 0.0));
        }
        Self { dim: d, matrix: s }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn apply(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        unvectorize(&self.matrix.matvec(&vectorize(rho)), self.dim)
    }

    pub fn preservation_defects(&self) -> PreservationDefects {
        let d = self.dim;
        let unit = |i: usize, j: usize| {
            let mut e = ComplexMatrix::zeros(d, d);
            e[(i, j)] = C64::new(1.0, 0.0);
            e
        };
        let mut out = PreservationDefects {
            trace: 0.0,
            hermiticity: 0.0,
        };
        for i in 0..d {
            for j in 0..d {
                let a = self.apply(&unit(i, j));
                let b = self.apply(&unit(j, i));
                out.trace = out.trace.max(a.trace().norm());
                out.hermiticity = out.hermiticity.max((&a.adjoint() - &b).max_abs());
            }
        }
        out
    }

    /// `exp(t L)` as a `d² × d²` matrix.
    pub fn propagator(&self, t: f64) -> Result<ComplexMatrix, LindbladError> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(LindbladError::NegativeTime(t));
        }
        Ok(expm(&self.matrix.scale_real(t)))
    }
}

fn one_norm(a: &ComplexMatrix) -> f64 {
    (0..a.cols())
        .map(|j| (0..a.rows()).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a Taylor series.
///
/// The argument is scaled by `2^-s` until its 1-norm is at most 1/2, the
/// series is summed until the next term is below `EXPM_TOL · 2^-s` relative
/// to the partial sum, and the result is squared `s` times.
pub fn expm(a: &ComplexMatrix) -> ComplexMatrix {
    let n = a.rows();
    let norm = one_norm(a);
    let mut s = 0u32;
    while norm / f64::from(1u32 << s.min(31)) > 0.5 && s < 60 {
        s += 1;
    }
    let scaled = a.scale_real(libm::ldexp(1.0, -(s as i32)));
    let term_tol = EXPM_TOL * libm::ldexp(1.0, -(s as i32)) * 1e-3;
    let mut sum = ComplexMatrix::identity(n);
    let mut term = ComplexMatrix::identity(n);
    for k in 1..60 {
        term = (&term * &scaled).scale_real(1.0 / k as f64);
        sum = &sum + &term;
        if one_norm(&term) <= term_tol * one_norm(&sum) {
            break;
        }
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// `T_t ρ0 = exp(tL) ρ0`, re-validated as a density matrix.
pub fn evolve_exact(
    rho0: &DensityMatrix,
    ops: &ModelOperators,
    t: f64,
    tol: &Tolerances,
) -> Result<DensityMatrix, LindbladError> {
    check_dim(rho0, ops)?;
    if t == 0.0 {
        return Ok(rho0.clone());
    }
    let sup = Superoperator::from_model(ops);
    evolve_with(&sup, rho0, t, tol)
}

fn evolve_with(
    sup: &Superoperator,
    rho0: &DensityMatrix,
    t: f64,
    tol: &Tolerances,
) -> Result<DensityMatrix, LindbladError> {
    if t == 0.0 {
        return Ok(rho0.clone());
    }
    let p = sup.propagator(t)?;
    let rho = unvectorize(&p.matvec(&vectorize(rho0)), sup.dim());
    Ok(crate::linalg::validate_density(rho.hermitize(), tol)?)
}

/// `T_t ρ0` at each of `times`.
pub fn evolve_exact_grid(
    rho0: &DensityMatrix,
    ops: &ModelOperators,
    times: &[f64],
    tol: &Tolerances,
) -> Result<Vec<DensityMatrix>, LindbladError> {
    check_dim(rho0, ops)?;
    let sup = Superoperator::from_model(ops);
    times.iter().map(|&t| evolve_with(&sup, rho0, t, tol)).collect()
}

/// Ensemble mean against the exact solution at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct UnravelingPoint {
    pub t: f64,
    pub mean: ComplexMatrix,
    pub exact: DensityMatrix,
    /// `‖mean - exact‖_F`.
    pub deviation: f64,
    /// Per-entry jackknife SEs (real and imaginary parts) combined in
    /// quadrature.
    pub se: f64,
}

impl UnravelingPoint {
    /// `max(0, deviation - 3·SE)`: the part not explained by sampling noise.
    pub fn excess(&self) -> f64 {
        (self.deviation - 3.0 * self.se).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnravelingReport {
    pub n_traj: usize,
    pub points: Vec<UnravelingPoint>,
}

impl UnravelingReport {
    pub fn max_deviation(&self) -> f64 {
        self.points.iter().map(|p| p.deviation).fold(0.0, f64::max)
    }

    pub fn max_excess(&self) -> f64 {
        self.points.iter().map(UnravelingPoint::excess).fold(0.0, f64::max)
    }

    /// Every point satisfies `deviation ≤ 3·SE + slack`.
    pub fn within(&self, slack: f64) -> bool {
        self.points.iter().all(|p| p.deviation <= 3.0 * p.se + slack)
    }
}

/// Compares the ensemble mean of recorded states with `T_t ρ0` on the shared
/// record grid. `ρ0` is taken from the first record.
pub fn unraveling_check(
    records: &[TrajectoryRecord],
    ops: &ModelOperators,
    tol: &Tolerances,
) -> Result<UnravelingReport, LindbladError> {
    if records.len() < MIN_UNRAVELING_TRAJECTORIES {
        return Err(LindbladError::TooFewTrajectories {
            found: records.len(),
            required: MIN_UNRAVELING_TRAJECTORIES,
        });
    }
    let first = &records[0];
    for (i, r) in records.iter().enumerate() {
        if r.times != first.times || r.states.len() != first.times.len() {
            return Err(LindbladError::GridMismatch(i));
        }
    }
    let d = ops.dim();
    let rho0 = &first.states[0];
    check_dim(rho0, ops)?;
    let exact = evolve_exact_grid(rho0, ops, &first.times, tol)?;
    let mut points = Vec::with_capacity(first.times.len());
    let mut column = Vec::with_capacity(records.len());
    for (idx, (&t, exact)) in first.times.iter().zip(exact).enumerate() {
        let mut mean = ComplexMatrix::zeros(d, d);
        let mut var = 0.0;
        for i in 0..d {
            for j in 0..d {
                column.clear();
                column.extend(records.iter().map(|r| r.states[idx][(i, j)].re));
                let re = jackknife_mean(&column);
                column.clear();
                column.extend(records.iter().map(|r| r.states[idx][(i, j)].im));
                let im = jackknife_mean(&column);
                mean[(i, j)] = C64::new(re.mean, im.mean);
                var += re.se * re.se + im.se * im.se;
            }
        }
        let deviation = (&mean - exact.matrix()).frobenius_norm();
        points.push(UnravelingPoint {
            t,
            mean,
            exact,
            deviation,
            se: libm::sqrt(var),
        });
    }
    Ok(UnravelingReport {
        n_traj: records.len(),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn amplitude_damping() -> ModelOperators {
        let l = ComplexMatrix::from_rows(&[[c(0.0, 0.0), c(1.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]]);
        ModelOperators::new(ComplexMatrix::zeros(2, 2), vec![l], &Tolerances::default()).unwrap()
    }

    #[test]
    fn dephasing_kills_coherence_at_rate_four() {
        let ops = ModelOperators::new(
            ComplexMatrix::zeros(2, 2),
            vec![ComplexMatrix::from_diagonal(&[1.0, -1.0])],
            &Tolerances::default(),
        )
        .unwrap();
        let s = 1.0 / libm::sqrt(2.0);
        let rho = DensityMatrix::pure(&[c(s, 0.0), c(s, 0.0)]);
        let out = gksl_apply(&rho, &ops).unwrap();
        assert!((out[(0, 1)] + rho[(0, 1)].scale(4.0)).norm() < 1e-15);
        assert!(out[(0, 0)].norm() < 1e-15);
        let diag = ComplexMatrix::from_diagonal(&[0.7, 0.3]);
        assert!(gksl_apply(&diag, &ops).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn superoperator_matches_direct_application() {
        let ops = amplitude_damping();
        let sup = Superoperator::from_model(&ops);
        let rho = ComplexMatrix::from_rows(&[[c(0.6, 0.0), c(0.1, 0.2)], [c(0.1, -0.2), c(0.4, 0.0)]]);
        let a = sup.apply(&rho);
        let b = gksl_apply(&rho, &ops).unwrap();
        assert!((&a - &b).max_abs() < 1e-15);
        let defects = sup.preservation_defects();
        assert!(defects.trace < 1e-15 && defects.hermiticity < 1e-15);
    }

    #[test]
    fn amplitude_damping_closed_form() {
        let ops = amplitude_damping();
        let s = 1.0 / libm::sqrt(2.0);
        // σ_- = |0⟩⟨1| lowers the excited level |1⟩.
        let rho0 = DensityMatrix::pure(&[c(s, 0.0), c(s, 0.0)]);
        let tol = Tolerances::default();
        for &t in &[0.0, 0.3, 1.0, 2.5] {
            let rho = evolve_exact(&rho0, &ops, t, &tol).unwrap();
            assert!((rho[(1, 1)].re - 0.5 * libm::exp(-2.0 * t)).abs() < 1e-12);
            assert!((rho[(0, 1)].re - 0.5 * libm::exp(-t)).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_negative_time() {
        let ops = amplitude_damping();
        let rho0 = DensityMatrix::maximally_mixed(2);
        assert_eq!(
            evolve_exact(&rho0, &ops, -1.0, &Tolerances::default()),
            Err(LindbladError::NegativeTime(-1.0))
        );
    }

    #[test]
    fn expm_of_diagonal() {
        let a = ComplexMatrix::from_diagonal(&[1.0, -3.0, 0.0]);
        let e = expm(&a);
        assert!((e[(0, 0)].re - core::f64::consts::E).abs() < 1e-13);
        assert!((e[(1, 1)].re - libm::exp(-3.0)).abs() < 1e-15);
        assert!((e[(2, 2)].re - 1.0).abs() < 1e-15);
    }
}
