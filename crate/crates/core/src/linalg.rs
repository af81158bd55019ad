//! Dense complex linear algebra sized for desk-scale Hilbert spaces.
//!
//! Storage is row-major throughout. Bipartite index convention: the joint
//! basis vector `|i⟩ ⊗ |j⟩` of `S ⊗ S'` has index `i * d_env + j`, which
//! matches [`ComplexMatrix::kron`].

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Add, Deref, Index, IndexMut, Mul, Sub};

use num_complex::Complex64 as C64;
use thiserror::Error;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Maximum number of cyclic Jacobi sweeps before giving up.
pub const MAX_JACOBI_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("entry count {found} does not match shape {rows}x{cols}")]
    ShapeMismatch { rows: usize, cols: usize, found: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("not a density matrix: {0}")]
    InvalidDensity(DensityReport),
    #[error("matrix is not Hermitian (defect {defect:e})")]
    NotHermitian { defect: f64 },
    #[error("Jacobi eigensolver did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("moment order must be at least {min}, got {order}")]
    InvalidOrder { order: u32, min: u32 },
    #[error("resolvent parameter must satisfy |x| < 1, got {x}")]
    ResolventOutOfRange { x: f64 },
    #[error("state vector is not normalized (squared norm {norm_sqr})")]
    NotNormalized { norm_sqr: f64 },
}

/// Numerical tolerances shared by validation and diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Max-norm bound on `ρ - ρ†`.
    pub herm: f64,
    /// Bound on `|Tr ρ - 1|`.
    pub trace: f64,
    /// Smallest eigenvalue accepted is `-psd`.
    pub psd: f64,
    /// Eigensolver residual and orthonormality tolerance.
    pub eig: f64,
    /// Hard floor on the minimum eigenvalue during a run; a step whose
    /// post-processed state falls below it aborts. `f64::NEG_INFINITY`
    /// disables the abort (the minimum is still recorded).
    pub psd_hard: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            herm: 1e-10,
            trace: 1e-10,
            psd: 1e-9,
            eig: 1e-10,
            psd_hard: -1e-6,
        }
    }
}

impl Tolerances {
    /// Tolerances used to validate states stored during a run: positivity is
    /// only enforced down to the hard floor.
    pub fn for_run_states(&self) -> Self {
        Self {
            psd: self.psd.max(-self.psd_hard),
            ..*self
        }
    }
}

/// Dense complex matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::ShapeMismatch {
                rows,
                cols,
                found: data.len(),
            });
        }
        if !data.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(v, 0.0);
        }
        m
    }

    /// Builds a square matrix from nested rows. Panics on ragged input.
    pub fn from_rows<R: AsRef<[C64]>>(rows: &[R]) -> Self {
        let n = rows.len();
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self {
            rows: n,
            cols,
            data,
        }
    }

    /// Rank-one projector `|v⟩⟨v|`.
    pub fn outer(v: &[C64]) -> Self {
        let n = v.len();
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = v[i] * v[j].conj();
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Row count; the dimension for square matrices.
    pub fn dim(&self) -> usize {
        self.rows
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m[(j, i)] = self[(i, j)].conj();
            }
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let mut m = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m[(j, i)] = self[(i, j)];
            }
        }
        m
    }

    pub fn conj(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, other: &Self, s: C64) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * s;
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// `Tr(self * other)` without forming the product.
    pub fn trace_product(&self, other: &Self) -> C64 {
        assert_eq!(self.cols, other.rows);
        assert_eq!(self.rows, other.cols);
        let mut acc = ZERO;
        for i in 0..self.rows {
            for k in 0..self.cols {
                acc += self[(i, k)] * other[(k, i)];
            }
        }
        acc
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|z| z.norm_sqr()).sum::<f64>())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Max-norm of `A - A†`.
    pub fn hermitian_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// `(A + A†) / 2`.
    pub fn hermitize(&self) -> Self {
        let mut m = self.clone();
        for i in 0..self.rows {
            for j in 0..self.cols {
                m[(i, j)] = (self[(i, j)] + self[(j, i)].conj()) * 0.5;
            }
        }
        m
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        let mut m = Self::zeros(rows, cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = self[(i, j)];
                for k in 0..other.rows {
                    for l in 0..other.cols {
                        m[(i * other.rows + k, j * other.cols + l)] = a * other[(k, l)];
                    }
                }
            }
        }
        m
    }

    pub fn matvec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// `[A^0, A^1, ..., A^max]`.
    pub fn powers(&self, max: usize) -> Vec<Self> {
        assert!(self.is_square());
        let mut out = Vec::with_capacity(max + 1);
        out.push(Self::identity(self.rows));
        for k in 1..=max {
            let next = if k == 1 {
                self.clone()
            } else {
                &out[k - 1] * self
            };
            out.push(next);
        }
        out
    }

    pub fn commutator(&self, other: &Self) -> Self {
        &(self * other) - &(other * self)
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        let mut out = ComplexMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

/// One failed density-matrix invariant with its measured magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensityViolation {
    NonHermitian { defect: f64 },
    TraceDefect { trace: f64 },
    NegativeEigenvalue { min: f64 },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DensityReport {
    pub violations: Vec<DensityViolation>,
}

impl DensityReport {
    pub fn has_negative_eigenvalue(&self) -> Option<f64> {
        self.violations.iter().find_map(|v| match v {
            DensityViolation::NegativeEigenvalue { min } => Some(*min),
            _ => None,
        })
    }
}

impl fmt::Display for DensityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            match v {
                DensityViolation::NonHermitian { defect } => {
                    write!(f, "non-Hermitian (defect {defect:e})")?
                }
                DensityViolation::TraceDefect { trace } => write!(f, "trace {trace} != 1")?,
                DensityViolation::NegativeEigenvalue { min } => {
                    write!(f, "negative eigenvalue {min}")?
                }
            }
        }
        Ok(())
    }
}

/// Positive semidefinite, unit-trace Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(ComplexMatrix);

impl DensityMatrix {
    /// Wraps a matrix known to satisfy the invariants (e.g. produced by an
    /// operation that preserves them).
    pub(crate) fn from_trusted(m: ComplexMatrix) -> Self {
        Self(m)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(ComplexMatrix::from_diagonal(&vec![1.0 / dim as f64; dim]))
    }

    /// `|v⟩⟨v| / ⟨v|v⟩`.
    pub fn pure(v: &[C64]) -> Self {
        let norm_sqr: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        Self(ComplexMatrix::outer(v).scale_real(1.0 / norm_sqr))
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_inner(self) -> ComplexMatrix {
        self.0
    }
}

impl Deref for DensityMatrix {
    type Target = ComplexMatrix;
    fn deref(&self) -> &ComplexMatrix {
        &self.0
    }
}

/// Checks Hermiticity, unit trace and positivity, naming every violation.
pub fn validate_density(m: ComplexMatrix, tol: &Tolerances) -> Result<DensityMatrix, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare {
            rows: m.rows,
            cols: m.cols,
        });
    }
    if !m.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let mut report = DensityReport::default();
    let defect = m.hermitian_defect();
    if defect > tol.herm {
        report
            .violations
            .push(DensityViolation::NonHermitian { defect });
    }
    let trace = m.trace();
    if (trace - ONE).norm() > tol.trace {
        report
            .violations
            .push(DensityViolation::TraceDefect { trace: trace.re });
    }
    // Positivity is judged on the Hermitian part so that a non-Hermitian
    // input still gets a meaningful eigenvalue report.
    let eig = hermitian_eigen_unchecked(&m.hermitize())?;
    let min = eig.values.last().copied().unwrap_or(0.0);
    if min < -tol.psd {
        report
            .violations
            .push(DensityViolation::NegativeEigenvalue { min });
    }
    if report.violations.is_empty() {
        Ok(DensityMatrix(m))
    } else {
        Err(LinalgError::InvalidDensity(report))
    }
}

/// Eigenvalues in decreasing order with matching orthonormal eigenvector
/// columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl EigenSystem {
    pub fn vector(&self, alpha: usize) -> Vec<C64> {
        (0..self.vectors.rows())
            .map(|i| self.vectors[(i, alpha)])
            .collect()
    }

    pub fn min_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// `Σ_α λ_α v_α v_α†`.
    pub fn reconstruct(&self) -> ComplexMatrix {
        let n = self.vectors.rows();
        let mut m = ComplexMatrix::zeros(n, n);
        for (alpha, &lambda) in self.values.iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] +=
                        self.vectors[(i, alpha)] * self.vectors[(j, alpha)].conj() * lambda;
                }
            }
        }
        m
    }
}

/// Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.
///
/// Sweeps visit `(p, q)` pairs in fixed row-major order, so identical input
/// gives bit-identical output. Eigenvalues are sorted in decreasing order by a
/// stable sort, so degenerate eigenvalues keep solver order.
pub fn hermitian_eigen(h: &ComplexMatrix, tol: &Tolerances) -> Result<EigenSystem, LinalgError> {
    if !h.is_square() {
        return Err(LinalgError::NotSquare {
            rows: h.rows,
            cols: h.cols,
        });
    }
    if !h.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let defect = h.hermitian_defect();
    if defect > tol.herm {
        return Err(LinalgError::NotHermitian { defect });
    }
    hermitian_eigen_unchecked(h)
}

/// Sorted eigenvalues only.
pub fn hermitian_eigenvalues(h: &ComplexMatrix, tol: &Tolerances) -> Result<Vec<f64>, LinalgError> {
    hermitian_eigen(h, tol).map(|e| e.values)
}

fn hermitian_eigen_unchecked(h: &ComplexMatrix) -> Result<EigenSystem, LinalgError> {
    let n = h.rows;
    let mut a = h.hermitize();
    let mut v = ComplexMatrix::identity(n);
    let scale = a.frobenius_norm();

    let mut done = n < 2 || scale == 0.0;
    let mut sweep = 0;
    while !done {
        if sweep == MAX_JACOBI_SWEEPS {
            return Err(LinalgError::NoConvergence { sweeps: sweep });
        }
        sweep += 1;
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].norm_sqr())
            .sum();
        if libm::sqrt(off) <= f64::EPSILON * 1e-2 * scale {
            done = true;
            continue;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let b = a[(p, q)];
                let babs = b.norm();
                if babs == 0.0 {
                    continue;
                }
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                // Late sweeps: drop elements already below rounding of the
                // diagonal.
                let g = 100.0 * babs;
                if sweep > 4 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    a[(p, q)] = ZERO;
                    a[(q, p)] = ZERO;
                    continue;
                }
                let phase = b / babs;
                let zeta = (aqq - app) / (2.0 * babs);
                let t = if zeta >= 0.0 {
                    1.0 / (zeta + libm::sqrt(1.0 + zeta * zeta))
                } else {
                    -1.0 / (-zeta + libm::sqrt(1.0 + zeta * zeta))
                };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = t * c;
                // U = [[c, s e^{iφ}], [-s e^{-iφ}, c]] on (p, q); A ← U† A U.
                let u_pq = phase * s;
                let u_qp = -phase.conj() * s;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * c + akq * u_qp;
                    a[(k, q)] = akp * u_pq + akq * c;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = apk * c + aqk * u_qp.conj();
                    a[(q, k)] = apk * u_pq.conj() + aqk * c;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                a[(p, p)] = C64::new(app - t * babs, 0.0);
                a[(q, q)] = C64::new(aqq + t * babs, 0.0);
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * c + vkq * u_qp;
                    v[(k, q)] = vkp * u_pq + vkq * c;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].re.total_cmp(&a[(i, i)].re));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut vectors = ComplexMatrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, col)] = v[(k, src)];
        }
    }
    Ok(EigenSystem { values, vectors })
}

/// `Tr_{S'}` of a density matrix on `S ⊗ S'`.
pub fn partial_trace(
    rho: &DensityMatrix,
    d_sys: usize,
    d_env: usize,
) -> Result<DensityMatrix, LinalgError> {
    Ok(DensityMatrix(partial_trace_matrix(rho, d_sys, d_env)?))
}

/// `Tr_{S'}` of an arbitrary square matrix on `S ⊗ S'`.
pub fn partial_trace_matrix(
    m: &ComplexMatrix,
    d_sys: usize,
    d_env: usize,
) -> Result<ComplexMatrix, LinalgError> {
    let n = d_sys * d_env;
    if !m.is_square() {
        return Err(LinalgError::NotSquare {
            rows: m.rows,
            cols: m.cols,
        });
    }
    if m.rows != n {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            found: m.rows,
        });
    }
    let mut out = ComplexMatrix::zeros(d_sys, d_sys);
    for i in 0..d_sys {
        for k in 0..d_sys {
            out[(i, k)] = (0..d_env).map(|j| m[(i * d_env + j, k * d_env + j)]).sum();
        }
    }
    Ok(out)
}

/// `Tr_{S'} |Ψ⟩⟨Ψ|` for a unit vector on `S ⊗ S'`.
pub fn partial_trace_pure(
    psi: &[C64],
    d_sys: usize,
    d_env: usize,
) -> Result<DensityMatrix, LinalgError> {
    if psi.len() != d_sys * d_env {
        return Err(LinalgError::DimensionMismatch {
            expected: d_sys * d_env,
            found: psi.len(),
        });
    }
    let norm_sqr: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    if (norm_sqr - 1.0).abs() > 1e-10 {
        return Err(LinalgError::NotNormalized { norm_sqr });
    }
    Ok(DensityMatrix(reduce_pure(psi, d_sys, d_env)))
}

pub(crate) fn reduce_pure(psi: &[C64], d_sys: usize, d_env: usize) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(d_sys, d_sys);
    for i in 0..d_sys {
        for k in i..d_sys {
            let v: C64 = (0..d_env)
                .map(|j| psi[i * d_env + j] * psi[k * d_env + j].conj())
                .sum();
            out[(i, k)] = v;
            out[(k, i)] = v.conj();
        }
        out[(i, i)].im = 0.0;
    }
    out
}

/// Schmidt purification `Ψ = Σ_α √p_α v_α ⊗ e_α` on `C^d ⊗ C^d`.
///
/// Returns the state vector and the environment dimension (`d`).
pub fn purify(rho: &DensityMatrix, tol: &Tolerances) -> Result<(Vec<C64>, usize), LinalgError> {
    let d = rho.dim();
    let eig = hermitian_eigen(rho, tol)?;
    let mut psi = vec![ZERO; d * d];
    for (alpha, &p) in eig.values.iter().enumerate() {
        let w = libm::sqrt(p.max(0.0));
        for i in 0..d {
            psi[i * d + alpha] = eig.vectors[(i, alpha)] * w;
        }
    }
    let norm = libm::sqrt(psi.iter().map(|z| z.norm_sqr()).sum::<f64>());
    for z in &mut psi {
        *z /= norm;
    }
    Ok((psi, d))
}

/// `Re Tr ρ^m`, by repeated multiplication.
pub fn trace_moment(rho: &ComplexMatrix, m: u32) -> Result<f64, LinalgError> {
    if m == 0 {
        return Err(LinalgError::InvalidOrder { order: m, min: 1 });
    }
    if m == 1 {
        return Ok(rho.trace().re);
    }
    let mut p = rho.clone();
    for _ in 2..m {
        p = &p * rho;
    }
    Ok(p.trace_product(rho).re)
}

/// `[d, Tr ρ, Tr ρ², ..., Tr ρ^max]` by repeated multiplication.
pub fn power_traces(rho: &ComplexMatrix, max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(max + 1);
    out.push(rho.dim() as f64);
    if max == 0 {
        return out;
    }
    out.push(rho.trace().re);
    let mut p = rho.clone();
    for _ in 2..=max {
        out.push(p.trace_product(rho).re);
        p = &p * rho;
    }
    out
}

/// `Tr (1 - xρ)^{-1} = Σ_α 1 / (1 - x p_α)` from the eigenvalues.
pub fn resolvent_trace(rho: &DensityMatrix, x: f64, tol: &Tolerances) -> Result<f64, LinalgError> {
    if !(x.abs() < 1.0) {
        return Err(LinalgError::ResolventOutOfRange { x });
    }
    let eig = hermitian_eigen(rho, tol)?;
    Ok(eig.values.iter().map(|p| 1.0 / (1.0 - x * p)).sum())
}

/// Upper bound `d |x|^{M+1} / (1 - |x|)` on the tail of `Σ_m x^m Tr ρ^m`
/// beyond order `M`, valid when the spectrum lies in `[0, 1]`.
pub fn resolvent_tail_bound(dim: usize, x: f64, order: usize) -> f64 {
    dim as f64 * libm::pow(x.abs(), (order + 1) as f64) / (1.0 - x.abs())
}

/// Frobenius distance between two equally shaped matrices.
pub fn frobenius_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    (a - b).frobenius_norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn validate_accepts_maximally_mixed_and_diagonal() {
        let tol = Tolerances::default();
        assert!(validate_density(ComplexMatrix::from_diagonal(&[0.5, 0.5]), &tol).is_ok());
        assert!(validate_density(ComplexMatrix::from_diagonal(&[0.7, 0.3]), &tol).is_ok());
    }

    #[test]
    fn validate_reports_negative_eigenvalue() {
        let tol = Tolerances::default();
        let err = validate_density(ComplexMatrix::from_diagonal(&[1.1, -0.1]), &tol).unwrap_err();
        let LinalgError::InvalidDensity(report) = err else {
            panic!("unexpected error {err:?}");
        };
        assert_eq!(report.violations.len(), 1);
        let min = report.has_negative_eigenvalue().unwrap();
        assert!((min + 0.1).abs() < 1e-12);
    }

    #[test]
    fn validate_reports_non_hermitian() {
        let tol = Tolerances::default();
        let m = ComplexMatrix::from_rows(&[[c(1.0, 0.0), c(1.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]]);
        let LinalgError::InvalidDensity(report) = validate_density(m, &tol).unwrap_err() else {
            panic!()
        };
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, DensityViolation::NonHermitian { defect } if (*defect - 1.0).abs() < 1e-15)));
    }

    #[test]
    fn validate_rejects_shape_and_nan() {
        let tol = Tolerances::default();
        assert!(matches!(
            validate_density(ComplexMatrix::zeros(2, 3), &tol),
            Err(LinalgError::NotSquare { rows: 2, cols: 3 })
        ));
        assert!(matches!(
            ComplexMatrix::new(1, 1, vec![c(f64::NAN, 0.0)]),
            Err(LinalgError::NonFinite)
        ));
        let mut m = ComplexMatrix::identity(2);
        m[(0, 1)] = c(f64::INFINITY, 0.0);
        assert!(matches!(validate_density(m, &tol), Err(LinalgError::NonFinite)));
    }

    #[test]
    fn eigen_of_diagonal_cases() {
        let tol = Tolerances::default();
        let e = hermitian_eigen(&ComplexMatrix::from_diagonal(&[0.5, 0.5]), &tol).unwrap();
        assert_eq!(e.values, vec![0.5, 0.5]);
        let e = hermitian_eigen(&ComplexMatrix::from_diagonal(&[1.0, -1.0]), &tol).unwrap();
        assert_eq!(e.values, vec![1.0, -1.0]);
        assert_eq!(e.vector(0), vec![c(1.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(e.vector(1), vec![c(0.0, 0.0), c(1.0, 0.0)]);
        let e = hermitian_eigen(&ComplexMatrix::from_diagonal(&[-1.0, 1.0]), &tol).unwrap();
        assert_eq!(e.values, vec![1.0, -1.0]);
        assert_eq!(e.vector(0), vec![c(0.0, 0.0), c(1.0, 0.0)]);
    }

    #[test]
    fn eigen_rejects_non_hermitian() {
        let tol = Tolerances::default();
        let m = ComplexMatrix::from_rows(&[[c(1.0, 0.0), c(1.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]]);
        assert!(matches!(
            hermitian_eigen(&m, &tol),
            Err(LinalgError::NotHermitian { .. })
        ));
    }

    #[test]
    fn eigen_of_sigma_y() {
        let tol = Tolerances::default();
        let sy = ComplexMatrix::from_rows(&[[c(0.0, 0.0), c(0.0, -1.0)], [c(0.0, 1.0), c(0.0, 0.0)]]);
        let e = hermitian_eigen(&sy, &tol).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-15 && (e.values[1] + 1.0).abs() < 1e-15);
        assert!((&e.reconstruct() - &sy).max_abs() < 1e-15);
    }

    #[test]
    fn partial_trace_cases() {
        let tol = Tolerances::default();
        let rho = ComplexMatrix::from_rows(&[[c(0.6, 0.0), c(0.1, 0.2)], [c(0.1, -0.2), c(0.4, 0.0)]]);
        let sigma = ComplexMatrix::from_diagonal(&[0.2, 0.3, 0.5]);
        let joint = validate_density(rho.kron(&sigma), &tol).unwrap();
        let red = partial_trace(&joint, 2, 3).unwrap();
        assert!((&*red - &rho).max_abs() < 1e-15);

        let s = 1.0 / libm::sqrt(2.0);
        let bell = [c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(s, 0.0)];
        let red = partial_trace_pure(&bell, 2, 2).unwrap();
        assert!((&*red - &ComplexMatrix::from_diagonal(&[0.5, 0.5])).max_abs() < 1e-15);

        assert!(matches!(
            partial_trace_pure(&bell, 3, 2),
            Err(LinalgError::DimensionMismatch { expected: 6, found: 4 })
        ));
        assert!(matches!(
            partial_trace(&joint, 2, 2),
            Err(LinalgError::DimensionMismatch { expected: 4, found: 6 })
        ));
    }

    #[test]
    fn purify_round_trips() {
        let tol = Tolerances::default();
        let rho = validate_density(
            ComplexMatrix::from_rows(&[[c(0.6, 0.0), c(0.1, 0.2)], [c(0.1, -0.2), c(0.4, 0.0)]]),
            &tol,
        )
        .unwrap();
        let (psi, d_env) = purify(&rho, &tol).unwrap();
        let red = partial_trace_pure(&psi, 2, d_env).unwrap();
        assert!((&*red - &*rho).max_abs() < 1e-14);
    }

    #[test]
    fn trace_moment_cases() {
        let pure = DensityMatrix::pure(&[c(0.6, 0.0), c(0.0, 0.8)]);
        for m in 1..6 {
            assert!((trace_moment(&pure, m).unwrap() - 1.0).abs() < 1e-14);
        }
        let mixed = DensityMatrix::maximally_mixed(4);
        for m in 1..6 {
            let expected = libm::pow(4.0, 1.0 - m as f64);
            assert!((trace_moment(&mixed, m).unwrap() - expected).abs() < 1e-15);
        }
        let diag = ComplexMatrix::from_diagonal(&[0.7, 0.3]);
        assert!((trace_moment(&diag, 2).unwrap() - 0.58).abs() < 1e-15);
        assert!(matches!(
            trace_moment(&diag, 0),
            Err(LinalgError::InvalidOrder { order: 0, .. })
        ));
        let pt = power_traces(&diag, 3);
        assert_eq!(pt[0], 2.0);
        assert!((pt[2] - 0.58).abs() < 1e-15);
        assert!((pt[3] - (0.343 + 0.027)).abs() < 1e-15);
    }

    #[test]
    fn resolvent_cases() {
        let tol = Tolerances::default();
        let rho = validate_density(ComplexMatrix::from_diagonal(&[0.7, 0.3]), &tol).unwrap();
        assert!((resolvent_trace(&rho, 0.0, &tol).unwrap() - 2.0).abs() < 1e-15);
        let expected = 1.0 / 0.65 + 1.0 / 0.85;
        assert!((resolvent_trace(&rho, 0.5, &tol).unwrap() - expected).abs() < 1e-14);
        assert!((expected - 2.714932).abs() < 1e-6);
        assert!(matches!(
            resolvent_trace(&rho, 1.0, &tol),
            Err(LinalgError::ResolventOutOfRange { .. })
        ));
        assert!(resolvent_trace(&rho, -1.5, &tol).is_err());
    }
}
