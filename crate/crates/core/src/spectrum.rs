//! Decreasing eigenvalue paths and the moment apparatus built on them.
//!
//! The moment measure of `ρ` puts mass `p_α` at value `p_α`, so its `m`-th
//! moment is `Σ p_α^{m+1} = Tr ρ^{m+1}`. Weak distances between such
//! measures are approximated by a fixed dictionary of trapezoidal test
//! functions (1 on `[c-ε, c+ε]`, 0 outside `(c-2ε, c+2ε)`, linear between)
//! plus `φ(x) = x`.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::linalg::{hermitian_eigenvalues, DensityMatrix, LinalgError, Tolerances};

/// Oscillation threshold for declaring a path converged.
pub const CONV_TOL: f64 = 1e-3;

/// Fraction of a run used as the tail window.
pub const TAIL_FRACTION: f64 = 0.2;

/// Largest dimension accepted by [`spectrum_from_moments`].
pub const MAX_RECONSTRUCTION_DIM: usize = 8;

/// Tent widths of the weak-distance dictionary.
pub const TENT_WIDTHS: [f64; 3] = [0.01, 0.05, 0.1];

/// Spacing of tent centers on `[0, 1]`.
pub const TENT_SPACING: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectrumError {
    #[error("first moment must be 1 within 1e-9, got {0}")]
    FirstMoment(f64),
    #[error("dimension {0} is outside 1..=8")]
    Dimension(usize),
    #[error("need {expected} moments, got {found}")]
    MomentCount { expected: usize, found: usize },
    #[error("inconsistent moment sequence: root {re} + {im}i")]
    InconsistentMoments { re: f64, im: f64 },
    #[error("tail window {window} is longer than half the run ({len} records)")]
    WindowTooLong { window: usize, len: usize },
    #[error("atom {0} lies outside [0, 1]")]
    AtomOutOfRange(f64),
    #[error("limit values must be positive and strictly decreasing")]
    UnorderedLimits,
    #[error("multiplicities must be positive and match the values")]
    BadMultiplicities,
    #[error("rows have inconsistent lengths")]
    RaggedRows,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Decreasing eigenvalues `p_{1,t} ≥ … ≥ p_{d,t}` on a time grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpectrumTrace {
    times: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

impl SpectrumTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_rows(times: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self, SpectrumError> {
        if times.len() != rows.len() || rows.windows(2).any(|w| w[0].len() != w[1].len()) {
            return Err(SpectrumError::RaggedRows);
        }
        Ok(Self { times, rows })
    }

    pub fn push(&mut self, t: f64, row: Vec<f64>) {
        self.times.push(t);
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// The path `t ↦ p_{α,t}` (0-based `alpha`).
    pub fn path(&self, alpha: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[alpha]).collect()
    }
}

/// Eigenvalues of `ρ` in decreasing order.
pub fn ordered_spectrum(rho: &DensityMatrix, tol: &Tolerances) -> Result<Vec<f64>, LinalgError> {
    hermitian_eigenvalues(rho, tol)
}

/// Elementary symmetric polynomials `e_0..e_d` from power sums `p_1..p_d`
/// by Newton's identities.
pub fn elementary_from_power_sums(p: &[f64]) -> Vec<f64> {
    let d = p.len();
    let mut e = vec![0.0; d + 1];
    e[0] = 1.0;
    for k in 1..=d {
        let mut acc = 0.0;
        for i in 1..=k {
            let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
            acc += sign * e[k - i] * p[i - 1];
        }
        e[k] = acc / k as f64;
    }
    e
}

/// Coefficients of `Π (x - λ_i)` from highest to lowest degree.
fn characteristic_coefficients(e: &[f64]) -> Vec<f64> {
    e.iter()
        .enumerate()
        .map(|(k, v)| if k % 2 == 0 { *v } else { -v })
        .collect()
}

fn horner(coeffs: &[f64], z: C64) -> (C64, C64) {
    let mut p = C64::new(0.0, 0.0);
    let mut dp = C64::new(0.0, 0.0);
    for &c in coeffs {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// Coefficients of the `order`-th derivative.
fn derivative(coeffs: &[f64], order: usize) -> Vec<f64> {
    let mut c = coeffs.to_vec();
    for _ in 0..order {
        let n = c.len() - 1;
        c = c[..n].iter().enumerate().map(|(i, v)| v * (n - i) as f64).collect();
    }
    c
}

/// All complex roots of a monic polynomial by Aberth–Ehrlich iteration.
fn aberth_roots(coeffs: &[f64]) -> Vec<C64> {
    let n = coeffs.len() - 1;
    let center = -coeffs[1] / n as f64;
    let mut z: Vec<C64> = (0..n)
        .map(|k| {
            let theta = 2.0 * core::f64::consts::PI * (k as f64 + 0.25) / n as f64;
            C64::new(center + 0.7 * libm::cos(theta), 0.7 * libm::sin(theta))
        })
        .collect();
    for _ in 0..500 {
        let mut max_step = 0.0f64;
        for i in 0..n {
            let (p, dp) = horner(coeffs, z[i]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let s: C64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let diff = z[i] - z[j];
                    if diff.norm() == 0.0 {
                        C64::new(0.0, 0.0)
                    } else {
                        C64::new(1.0, 0.0) / diff
                    }
                })
                .sum();
            let step = ratio / (C64::new(1.0, 0.0) - ratio * s);
            if step.re.is_finite() && step.im.is_finite() {
                z[i] -= step;
                max_step = max_step.max(step.norm());
            }
        }
        if max_step <= 1e-16 {
            break;
        }
    }
    z
}

/// Width within which rounding of the coefficients can split a double root
/// at `z`: `sqrt(8η / |p''(z)|)` with `η` a bound on the evaluation noise.
fn split_width(coeffs: &[f64], z: C64) -> f64 {
    let second = horner(&derivative(coeffs, 2), z).0.norm();
    let mut scale = 0.0;
    let mut zn = 1.0;
    for c in coeffs.iter().rev() {
        scale += c.abs() * zn;
        zn *= z.norm();
    }
    let eta = 64.0 * f64::EPSILON * scale;
    if second == 0.0 {
        f64::INFINITY
    } else {
        libm::sqrt(8.0 * eta / second)
    }
}

/// Single-linkage groups of roots that rounding cannot tell apart: closer
/// than `10 · max |Im z|` or than ten split widths at their midpoint.
fn cluster(roots: &[C64], coeffs: &[f64]) -> Vec<Vec<usize>> {
    let n = roots.len();
    let max_im = roots.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let mut label: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            let gap = (roots[i] - roots[j]).norm();
            let mid = (roots[i] + roots[j]) / 2.0;
            if gap <= 10.0 * max_im || gap <= 10.0 * split_width(coeffs, mid) {
                let (a, b) = (label[i], label[j]);
                if a != b {
                    for l in &mut label {
                        if *l == b {
                            *l = a;
                        }
                    }
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        match groups.iter_mut().find(|g| label[g[0]] == label[i]) {
            Some(g) => g.push(i),
            None => groups.push(vec![i]),
        }
    }
    groups
}

/// Reconstructs a spectrum from its power sums `κ_m = Tr ρ^m`, `m = 1..d`.
///
/// Newton's identities give the characteristic polynomial, whose roots are
/// found by Aberth iteration. A multiple eigenvalue splits into a small
/// cluster of roots under rounding; a cluster of `k` roots is replaced by a
/// `k`-fold root, located by Newton steps on the `(k-1)`-th derivative
/// started at the cluster centroid. Roots with imaginary part above 1e-6
/// or outside `[-1e-6, 1 + 1e-6]` reject the sequence; the rest are clipped
/// to `[-10·eig_tol, 1]` and returned in decreasing order.
pub fn spectrum_from_moments(kappa: &[f64], d: usize, tol: &Tolerances) -> Result<Vec<f64>, SpectrumError> {
    if d == 0 || d > MAX_RECONSTRUCTION_DIM {
        return Err(SpectrumError::Dimension(d));
    }
    if kappa.len() < d {
        return Err(SpectrumError::MomentCount {
            expected: d,
            found: kappa.len(),
        });
    }
    if !((kappa[0] - 1.0).abs() <= 1e-9) {
        return Err(SpectrumError::FirstMoment(kappa[0]));
    }
    let coeffs = characteristic_coefficients(&elementary_from_power_sums(&kappa[..d]));
    let roots = aberth_roots(&coeffs);
    let mut values = Vec::with_capacity(d);
    for group in cluster(&roots, &coeffs) {
        let k = group.len();
        let mut z = group.iter().map(|&i| roots[i]).sum::<C64>() / k as f64;
        // A k-fold root is a simple root of the (k-1)-th derivative.
        let target = derivative(&coeffs, k - 1);
        if target.len() > 1 {
            for _ in 0..4 {
                let (p, dp) = horner(&target, z);
                if dp.norm() == 0.0 {
                    break;
                }
                let next = z - p / dp;
                if !(next.re.is_finite() && next.im.is_finite()) {
                    break;
                }
                z = next;
            }
        }
        if z.im.abs() > 1e-6 || z.re < -1e-6 || z.re > 1.0 + 1e-6 {
            return Err(SpectrumError::InconsistentMoments { re: z.re, im: z.im });
        }
        let v = z.re.clamp(-10.0 * tol.eig, 1.0);
        values.extend(core::iter::repeat(v).take(k));
    }
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

/// The measure with mass `p_α` at `p_α`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentMeasure {
    atoms: Vec<f64>,
    masses: Vec<f64>,
}

impl MomentMeasure {
    /// Builds the measure from a spectrum; non-positive eigenvalues carry no
    /// mass and are dropped.
    pub fn from_spectrum(spectrum: &[f64]) -> Self {
        let atoms: Vec<f64> = spectrum.iter().copied().filter(|&p| p > 0.0).collect();
        Self {
            masses: atoms.clone(),
            atoms,
        }
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// `∫ φ dμ`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, phi: F) -> f64 {
        self.atoms.iter().zip(&self.masses).map(|(&a, &w)| w * phi(a)).sum()
    }

    /// `∫ x^m dμ`.
    pub fn moment(&self, m: u32) -> f64 {
        self.integrate(|x| libm::pow(x, f64::from(m)))
    }
}

/// The moment measure of `ρ`.
pub fn moment_measure(rho: &DensityMatrix, tol: &Tolerances) -> Result<MomentMeasure, LinalgError> {
    Ok(MomentMeasure::from_spectrum(&ordered_spectrum(rho, tol)?))
}

/// Trapezoid: 1 on `[c-ε, c+ε]`, 0 outside `(c-2ε, c+2ε)`, linear between.
pub fn tent(x: f64, center: f64, eps: f64) -> f64 {
    let r = (x - center).abs();
    if r <= eps {
        1.0
    } else if r >= 2.0 * eps {
        0.0
    } else {
        2.0 - r / eps
    }
}

/// `sup_φ |∫φ dμ_a - ∫φ dμ_b|` over the tent dictionary and `φ(x) = x`.
pub fn weak_distance(a: &MomentMeasure, b: &MomentMeasure, tol: &Tolerances) -> Result<f64, SpectrumError> {
    for &x in a.atoms.iter().chain(&b.atoms) {
        if x < -tol.psd || x > 1.0 + tol.psd {
            return Err(SpectrumError::AtomOutOfRange(x));
        }
    }
    let mut best = (a.integrate(|x| x) - b.integrate(|x| x)).abs();
    let n_centers = libm::round(1.0 / TENT_SPACING) as usize;
    for &eps in &TENT_WIDTHS {
        for j in 0..=n_centers {
            let c = j as f64 * TENT_SPACING;
            let diff = (a.integrate(|x| tent(x, c, eps)) - b.integrate(|x| tent(x, c, eps))).abs();
            best = best.max(diff);
        }
    }
    Ok(best)
}

/// Default tail window: the last 20% of the records (at least one).
pub fn default_tail_window(len: usize) -> usize {
    (libm::ceil(TAIL_FRACTION * len as f64) as usize).max(1)
}

/// Tail statistics of each path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub window: usize,
    /// Tail mean per `α`.
    pub limits: Vec<f64>,
    /// Tail `max - min` per `α`.
    pub oscillations: Vec<f64>,
}

impl ConvergenceReport {
    pub fn max_oscillation(&self) -> f64 {
        self.oscillations.iter().copied().fold(0.0, f64::max)
    }

    pub fn converged(&self, conv_tol: f64) -> bool {
        self.max_oscillation() <= conv_tol
    }
}

fn tail_stats(rows: &[Vec<f64>], window: usize) -> Result<(Vec<f64>, Vec<f64>), SpectrumError> {
    if window == 0 || 2 * window > rows.len() {
        return Err(SpectrumError::WindowTooLong { window, len: rows.len() });
    }
    let d = rows[0].len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(SpectrumError::RaggedRows);
    }
    let tail = &rows[rows.len() - window..];
    let mut limits = vec![0.0; d];
    let mut osc = vec![0.0; d];
    for a in 0..d {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for r in tail {
            lo = lo.min(r[a]);
            hi = hi.max(r[a]);
            sum += r[a];
        }
        limits[a] = sum / window as f64;
        osc[a] = hi - lo;
    }
    Ok((limits, osc))
}

/// Per-path tail mean and oscillation over the last `tail_window` records.
pub fn convergence_diagnostic(trace: &SpectrumTrace, tail_window: usize) -> Result<ConvergenceReport, SpectrumError> {
    let (limits, oscillations) = tail_stats(&trace.rows, tail_window)?;
    Ok(ConvergenceReport {
        window: tail_window,
        limits,
        oscillations,
    })
}

/// Distinct limit values `q_1 > q_2 > … > 0` with multiplicities.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitSpectrum {
    values: Vec<f64>,
    multiplicities: Vec<u32>,
}

impl LimitSpectrum {
    pub fn new(values: Vec<f64>, multiplicities: Vec<u32>) -> Result<Self, SpectrumError> {
        if values.len() != multiplicities.len() || multiplicities.iter().any(|&m| m == 0) {
            return Err(SpectrumError::BadMultiplicities);
        }
        if values.iter().any(|&q| !(q > 0.0)) || values.windows(2).any(|w| w[0] <= w[1]) {
            return Err(SpectrumError::UnorderedLimits);
        }
        Ok(Self {
            values,
            multiplicities,
        })
    }

    /// Groups limit estimates that agree within `merge_tol`; values at or
    /// below `merge_tol` count as zero and are dropped.
    pub fn from_limits(limits: &[f64], merge_tol: f64) -> Self {
        let mut sorted: Vec<f64> = limits.iter().copied().filter(|&q| q > merge_tol).collect();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let mut values: Vec<f64> = Vec::new();
        let mut multiplicities: Vec<u32> = Vec::new();
        let mut sums: Vec<f64> = Vec::new();
        for q in sorted {
            match values.last() {
                Some(&last) if last - q <= merge_tol => {
                    *sums.last_mut().expect("parallel vectors") += q;
                    *multiplicities.last_mut().expect("parallel vectors") += 1;
                }
                _ => {
                    values.push(q);
                    sums.push(q);
                    multiplicities.push(1);
                }
            }
        }
        for ((v, s), m) in values.iter_mut().zip(&sums).zip(&multiplicities) {
            *v = s / f64::from(*m);
        }
        Self {
            values,
            multiplicities,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn multiplicities(&self) -> &[u32] {
        &self.multiplicities
    }
}

/// `1 - Σ_r α_r q_r`.
pub fn mass_deficit(limits: &LimitSpectrum) -> f64 {
    1.0 - limits
        .values
        .iter()
        .zip(&limits.multiplicities)
        .map(|(q, &a)| q * f64::from(a))
        .sum::<f64>()
}

/// `‖J⁻¹‖_∞` for `J_{mα} = m p_α^{m-1}` (`m = 1..d`), the sensitivity of a
/// spectrum to its power sums. Infinite when `J` is singular (repeated
/// eigenvalues).
pub fn reconstruction_conditioning(spectrum: &[f64]) -> f64 {
    let d = spectrum.len();
    let mut a: Vec<Vec<f64>> = (1..=d)
        .map(|m| {
            spectrum
                .iter()
                .map(|&p| m as f64 * libm::pow(p, (m - 1) as f64))
                .collect()
        })
        .collect();
    let mut inv: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for col in 0..d {
        let pivot = (col..d)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty range");
        if a[pivot][col].abs() < 1e-14 {
            return f64::INFINITY;
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col];
        for j in 0..d {
            a[col][j] /= p;
            inv[col][j] /= p;
        }
        for i in 0..d {
            if i != col {
                let f = a[i][col];
                for j in 0..d {
                    a[i][j] -= f * a[col][j];
                    inv[i][j] -= f * inv[col][j];
                }
            }
        }
    }
    inv.iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Moment stabilization against spectrum stabilization over a tail window.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilizationReport {
    pub moment_oscillation: f64,
    pub spectrum_oscillation: f64,
    /// Conditioning at the tail-mean spectrum.
    pub conditioning: f64,
    pub moments_stable: bool,
    /// If the moments are stable, every path oscillates by at most
    /// `conditioning · conv_tol`; vacuously true otherwise.
    pub consistent: bool,
}

/// Checks that stable power sums `Tr ρ^m` (`m = 2..d`, one row per record)
/// imply stable eigenvalue paths.
pub fn stabilization_check(
    trace: &SpectrumTrace,
    moments: &[Vec<f64>],
    tail_window: usize,
    conv_tol: f64,
) -> Result<StabilizationReport, SpectrumError> {
    if moments.len() != trace.len() {
        return Err(SpectrumError::RaggedRows);
    }
    let spec = convergence_diagnostic(trace, tail_window)?;
    let moment_oscillation = if moments.first().map_or(true, Vec::is_empty) {
        0.0
    } else {
        tail_stats(moments, tail_window)?.1.into_iter().fold(0.0, f64::max)
    };
    let conditioning = reconstruction_conditioning(&spec.limits);
    let spectrum_oscillation = spec.max_oscillation();
    let moments_stable = moment_oscillation <= conv_tol;
    let consistent = !moments_stable || spectrum_oscillation <= conditioning * conv_tol;
    Ok(StabilizationReport {
        moment_oscillation,
        spectrum_oscillation,
        conditioning,
        moments_stable,
        consistent,
    })
}
