//! Euler–Maruyama integration of the diffusion equations.
//!
//! Mixed-state equation on `S`:
//!
//! ```text
//! dρ = Σ_k (L̃_k ρ dB_k + ρ L̃_k† dB_k*)
//!    + { [ρ, iH̃] - Σ_k (ρ L̃_k†L̃_k + L̃_k†L̃_k ρ - 2 L̃_k ρ L̃_k†) } dt
//! ```
//!
//! Pure-state equation on `S ⊗ S'` (operators act as `A ⊗ I`):
//!
//! ```text
//! dΨ = Σ_k L̃_k Ψ dB_k - (iH̃ + Σ_k L̃_k†L̃_k) Ψ dt
//! ```
//!
//! with `L̃ = L - ⟨L⟩`, `H̃ = H + i Σ_k (L_k ⟨L_k⟩* - L_k† ⟨L_k⟩)` and
//! `⟨L⟩ = Tr ρL` (or `⟨Ψ|L|Ψ⟩`). After each mixed step the state is
//! hermitized and trace-renormalized; after each pure step the vector is
//! renormalized. The raw defects before this post-processing are reported.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::linalg::{
    hermitian_eigen, reduce_pure, ComplexMatrix, DensityMatrix, LinalgError, Tolerances,
};
use crate::moments::{DoobMeyerLedger, MomentsError};
use crate::noise::{ComplexIncrementBlock, IncrementSource, NoiseError};
use crate::spectrum::SpectrumTrace;

const I: C64 = C64::new(0.0, 1.0);

/// Squared norm below which a raw pure step counts as collapsed.
pub const NORM_COLLAPSE: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error("increment block has {found} channels, expected {expected}")]
    ChannelMismatch { expected: usize, found: usize },
    #[error("state dimension {found} does not match operators ({expected})")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("minimum eigenvalue {min_eigenvalue:e} fell below the hard floor {floor:e}")]
    PositivityLost { min_eigenvalue: f64, floor: f64 },
    #[error("raw trace {0} is not positive and finite")]
    TraceCollapse(f64),
    #[error("raw squared norm {0} collapsed")]
    NormCollapse(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryError {
    #[error("time step must be positive and finite, got {0}")]
    NonPositiveStep(f64),
    #[error("horizon must be non-negative and finite, got {0}")]
    InvalidHorizon(f64),
    #[error("record stride must be at least 1")]
    ZeroStride,
    #[error("state dimension {found} does not match operators ({expected})")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid initial state: {0}")]
    InitialState(LinalgError),
    #[error(transparent)]
    Moments(#[from] MomentsError),
    #[error("noise failure at step {step}: {source}")]
    Noise { step: usize, source: NoiseError },
    #[error("step {step} (t = {t}): {source}")]
    Step { step: usize, t: f64, source: StepError },
}

impl TrajectoryError {
    /// Whether the failure happened during integration rather than setup.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Self::Step { .. })
    }
}

/// The model `(H, {L_k})` on a `dim`-dimensional system.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOperators {
    hamiltonian: ComplexMatrix,
    couplings: Vec<ComplexMatrix>,
}

impl ModelOperators {
    pub fn new(
        hamiltonian: ComplexMatrix,
        couplings: Vec<ComplexMatrix>,
        tol: &Tolerances,
    ) -> Result<Self, LinalgError> {
        if !hamiltonian.is_square() {
            return Err(LinalgError::NotSquare {
                rows: hamiltonian.rows(),
                cols: hamiltonian.cols(),
            });
        }
        if !hamiltonian.is_finite() {
            return Err(LinalgError::NonFinite);
        }
        let defect = hamiltonian.hermitian_defect();
        if defect > tol.herm {
            return Err(LinalgError::NotHermitian { defect });
        }
        let d = hamiltonian.rows();
        for l in &couplings {
            if !l.is_square() {
                return Err(LinalgError::NotSquare {
                    rows: l.rows(),
                    cols: l.cols(),
                });
            }
            if l.rows() != d {
                return Err(LinalgError::DimensionMismatch {
                    expected: d,
                    found: l.rows(),
                });
            }
            if !l.is_finite() {
                return Err(LinalgError::NonFinite);
            }
        }
        Ok(Self {
            hamiltonian,
            couplings,
        })
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.rows()
    }

    pub fn n_channels(&self) -> usize {
        self.couplings.len()
    }

    pub fn hamiltonian(&self) -> &ComplexMatrix {
        &self.hamiltonian
    }

    pub fn couplings(&self) -> &[ComplexMatrix] {
        &self.couplings
    }

    /// `(H ⊗ I, {L_k ⊗ I})` on `S ⊗ S'` with `dim S' = env_dim`.
    pub fn lift(&self, env_dim: usize) -> Self {
        let id = ComplexMatrix::identity(env_dim);
        Self {
            hamiltonian: self.hamiltonian.kron(&id),
            couplings: self.couplings.iter().map(|l| l.kron(&id)).collect(),
        }
    }
}

/// State-dependent operators `L̃_k`, `H̃` and the expectations `⟨L_k⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveOperators {
    pub expectations: Vec<C64>,
    pub ltilde: Vec<ComplexMatrix>,
    pub htilde: ComplexMatrix,
}

/// Builds `L̃_k`, `H̃` from given expectations `⟨L_k⟩`.
pub fn effective_from_expectations(ops: &ModelOperators, expectations: Vec<C64>) -> EffectiveOperators {
    let d = ops.dim();
    let id = ComplexMatrix::identity(d);
    let mut htilde = ops.hamiltonian.clone();
    let ltilde = ops
        .couplings
        .iter()
        .zip(&expectations)
        .map(|(l, &e)| {
            htilde.add_scaled(l, I * e.conj());
            htilde.add_scaled(&l.adjoint(), -I * e);
            let mut lt = l.clone();
            lt.add_scaled(&id, -e);
            lt
        })
        .collect();
    EffectiveOperators {
        expectations,
        ltilde,
        htilde,
    }
}

/// Effective operators at a density matrix, `⟨L⟩ = Tr ρL`.
pub fn effective_operators(rho: &ComplexMatrix, ops: &ModelOperators) -> Result<EffectiveOperators, StepError> {
    if rho.rows() != ops.dim() || !rho.is_square() {
        return Err(StepError::DimensionMismatch {
            expected: ops.dim(),
            found: rho.rows(),
        });
    }
    let expectations = ops.couplings.iter().map(|l| rho.trace_product(l)).collect();
    Ok(effective_from_expectations(ops, expectations))
}

/// Effective operators at a state vector, `⟨L⟩ = ⟨Ψ|L|Ψ⟩`.
pub fn effective_operators_pure(psi: &[C64], ops: &ModelOperators) -> Result<EffectiveOperators, StepError> {
    if psi.len() != ops.dim() {
        return Err(StepError::DimensionMismatch {
            expected: ops.dim(),
            found: psi.len(),
        });
    }
    let expectations = ops
        .couplings
        .iter()
        .map(|l| {
            let lpsi = l.matvec(psi);
            psi.iter().zip(&lpsi).map(|(a, b)| a.conj() * b).sum()
        })
        .collect();
    Ok(effective_from_expectations(ops, expectations))
}

/// `Σ_k (L̃_k ρ dB_k + ρ L̃_k† dB_k*)`.
pub fn mixed_noise(rho: &ComplexMatrix, eff: &EffectiveOperators, db: &ComplexIncrementBlock) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(rho.rows(), rho.cols());
    for (l, b) in eff.ltilde.iter().zip(&db.values) {
        let x = (l * rho).scale(*b);
        out = &out + &x;
        out = &out + &x.adjoint();
    }
    out
}

/// `[ρ, iH̃] - Σ_k (ρ L̃_k†L̃_k + L̃_k†L̃_k ρ - 2 L̃_k ρ L̃_k†)`, i.e. the GKSL
/// generator built from `(H̃, L̃_k)`, applied to any square `ρ`.
pub fn mixed_drift(rho: &ComplexMatrix, eff: &EffectiveOperators) -> ComplexMatrix {
    let ih = eff.htilde.scale(I);
    let mut out = &(rho * &ih) - &(&ih * rho);
    for l in &eff.ltilde {
        let ld = l.adjoint();
        let k = &ld * l;
        out = &out - &(rho * &k);
        out = &out - &(&k * rho);
        out.add_scaled(&(&(l * rho) * &ld), C64::new(2.0, 0.0));
    }
    out
}

/// The raw Euler–Maruyama update `ρ + noise + drift·dt`.
pub fn raw_mixed_update(
    rho: &ComplexMatrix,
    eff: &EffectiveOperators,
    db: &ComplexIncrementBlock,
    dt: f64,
) -> ComplexMatrix {
    let mut next = rho + &mixed_noise(rho, eff, db);
    next.add_scaled(&mixed_drift(rho, eff), C64::new(dt, 0.0));
    next
}

/// Result of one post-processed mixed step.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedStep {
    pub state: DensityMatrix,
    /// Decreasing eigenvalues of `state`.
    pub eigenvalues: Vec<f64>,
    /// `|Tr ρ_raw - 1|`.
    pub raw_trace_defect: f64,
    /// Max-norm of `ρ_raw - ρ_raw†`.
    pub raw_hermiticity_defect: f64,
}

impl MixedStep {
    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }
}

fn check_block(n: usize, db: &ComplexIncrementBlock) -> Result<(), StepError> {
    if db.n() != n {
        return Err(StepError::ChannelMismatch {
            expected: n,
            found: db.n(),
        });
    }
    Ok(())
}

/// One mixed-state step: raw update, hermitize, renormalize the trace, and
/// check the minimum eigenvalue against `tol.psd_hard`.
pub fn step_mixed(
    rho: &DensityMatrix,
    ops: &ModelOperators,
    db: &ComplexIncrementBlock,
    dt: f64,
    tol: &Tolerances,
) -> Result<MixedStep, StepError> {
    check_block(ops.n_channels(), db)?;
    let eff = effective_operators(rho, ops)?;
    postprocess_mixed(raw_mixed_update(rho, &eff, db, dt), tol)
}

fn postprocess_mixed(raw: ComplexMatrix, tol: &Tolerances) -> Result<MixedStep, StepError> {
    if !raw.is_finite() {
        return Err(StepError::Linalg(LinalgError::NonFinite));
    }
    let raw_trace = raw.trace().re;
    let raw_hermiticity_defect = raw.hermitian_defect();
    if !(raw_trace > 0.0 && raw_trace.is_finite()) {
        return Err(StepError::TraceCollapse(raw_trace));
    }
    let state = raw.hermitize().scale_real(1.0 / raw_trace);
    let eig = hermitian_eigen(&state, tol)?;
    let min = eig.min_value();
    if min < tol.psd_hard {
        return Err(StepError::PositivityLost {
            min_eigenvalue: min,
            floor: tol.psd_hard,
        });
    }
    Ok(MixedStep {
        state: DensityMatrix::from_trusted(state),
        eigenvalues: eig.values,
        raw_trace_defect: (raw_trace - 1.0).abs(),
        raw_hermiticity_defect,
    })
}

/// Result of one renormalized pure step.
#[derive(Debug, Clone, PartialEq)]
pub struct PureStep {
    pub state: Vec<C64>,
    /// `| ‖Ψ_raw‖² - 1 |`.
    pub raw_norm_defect: f64,
}

/// One pure-state step with operators already acting on the full space.
pub fn step_pure(
    psi: &[C64],
    ops: &ModelOperators,
    db: &ComplexIncrementBlock,
    dt: f64,
) -> Result<PureStep, StepError> {
    check_block(ops.n_channels(), db)?;
    let eff = effective_operators_pure(psi, ops)?;
    let mut next = psi.to_vec();
    let hpsi = eff.htilde.matvec(psi);
    for (n, h) in next.iter_mut().zip(&hpsi) {
        *n -= I * h * dt;
    }
    for (l, b) in eff.ltilde.iter().zip(&db.values) {
        let lpsi = l.matvec(psi);
        let kpsi = l.adjoint().matvec(&lpsi);
        for ((n, a), k) in next.iter_mut().zip(&lpsi).zip(&kpsi) {
            *n += a * b - k * dt;
        }
    }
    let norm_sqr: f64 = next.iter().map(|z| z.norm_sqr()).sum();
    if !(norm_sqr >= NORM_COLLAPSE && norm_sqr.is_finite()) {
        return Err(StepError::NormCollapse(norm_sqr));
    }
    let inv = 1.0 / libm::sqrt(norm_sqr);
    for z in &mut next {
        *z *= inv;
    }
    Ok(PureStep {
        state: next,
        raw_norm_defect: (norm_sqr - 1.0).abs(),
    })
}

/// Where a trajectory starts.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    /// Integrate the mixed-state equation on `S` from `ρ0`.
    Mixed(DensityMatrix),
    /// Integrate the pure-state equation on `S ⊗ S'` from `Ψ0` and record
    /// `Tr_{S'} |Ψ⟩⟨Ψ|`.
    Pure { psi: Vec<C64>, env_dim: usize },
}

/// Integration settings shared by all trajectories of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunParams {
    pub dt: f64,
    pub t_max: f64,
    /// Record every `record_stride` steps (and always the last step).
    pub record_stride: usize,
    /// Moment orders tracked by the Doob–Meyer ledger (each `≥ 2`).
    pub orders: Vec<u32>,
    pub tolerances: Tolerances,
}

impl RunParams {
    pub fn new(dt: f64, t_max: f64) -> Self {
        Self {
            dt,
            t_max,
            record_stride: 1,
            orders: vec![2, 3],
            tolerances: Tolerances::default(),
        }
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(TrajectoryError::NonPositiveStep(self.dt));
        }
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return Err(TrajectoryError::InvalidHorizon(self.t_max));
        }
        if self.record_stride == 0 {
            return Err(TrajectoryError::ZeroStride);
        }
        for &m in &self.orders {
            if m < 2 {
                return Err(MomentsError::InvalidOrder { order: m, min: 2 }.into());
            }
        }
        Ok(())
    }

    /// `round(t_max / dt)`.
    pub fn n_steps(&self) -> usize {
        libm::round(self.t_max / self.dt) as usize
    }

    pub fn is_record_step(&self, k: usize) -> bool {
        k % self.record_stride == 0 || k == self.n_steps()
    }

    /// The recorded time grid `k·dt`.
    pub fn record_times(&self) -> Vec<f64> {
        let n = self.n_steps();
        (0..=n)
            .filter(|&k| self.is_record_step(k))
            .map(|k| k as f64 * self.dt)
            .collect()
    }
}

/// Numerical health of one trajectory, over every step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunDiagnostics {
    pub steps: usize,
    pub max_raw_trace_defect: f64,
    pub max_raw_hermiticity_defect: f64,
    pub max_raw_norm_defect: f64,
    /// Smallest eigenvalue of the stored state (every step in mixed mode,
    /// record points in pure mode).
    pub min_eigenvalue: f64,
    /// Max Frobenius deviation between the two routes of a purification
    /// check (0 otherwise).
    pub max_purification_deviation: f64,
}

impl Default for RunDiagnostics {
    fn default() -> Self {
        Self {
            steps: 0,
            max_raw_trace_defect: 0.0,
            max_raw_hermiticity_defect: 0.0,
            max_raw_norm_defect: 0.0,
            min_eigenvalue: f64::INFINITY,
            max_purification_deviation: 0.0,
        }
    }
}

/// Everything recorded along one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub min_eigenvalues: Vec<f64>,
    pub ledger: DoobMeyerLedger,
    pub spectrum: SpectrumTrace,
    /// Per-record Frobenius deviations of a purification check (empty
    /// otherwise).
    pub purification_deviations: Vec<f64>,
    pub diagnostics: RunDiagnostics,
}

impl TrajectoryRecord {
    pub fn final_state(&self) -> &DensityMatrix {
        self.states.last().expect("a record holds at least t = 0")
    }
}

struct PureEngine {
    psi: Vec<C64>,
    env_dim: usize,
    lifted: ModelOperators,
}

impl PureEngine {
    fn new(psi: Vec<C64>, env_dim: usize, ops: &ModelOperators) -> Result<Self, TrajectoryError> {
        let expected = ops.dim() * env_dim;
        if psi.len() != expected || env_dim == 0 {
            return Err(TrajectoryError::DimensionMismatch {
                expected,
                found: psi.len(),
            });
        }
        if psi.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(TrajectoryError::InitialState(LinalgError::NonFinite));
        }
        let norm_sqr: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if (norm_sqr - 1.0).abs() > 1e-10 {
            return Err(TrajectoryError::InitialState(LinalgError::NotNormalized { norm_sqr }));
        }
        Ok(Self {
            psi,
            env_dim,
            lifted: ops.lift(env_dim),
        })
    }

    fn reduced(&self, d: usize) -> ComplexMatrix {
        reduce_pure(&self.psi, d, self.env_dim)
    }

    fn step(&mut self, db: &ComplexIncrementBlock, dt: f64, diag: &mut RunDiagnostics) -> Result<(), StepError> {
        let s = step_pure(&self.psi, &self.lifted, db, dt)?;
        diag.max_raw_norm_defect = diag.max_raw_norm_defect.max(s.raw_norm_defect);
        self.psi = s.state;
        Ok(())
    }
}

struct MixedEngine {
    rho: DensityMatrix,
    eigenvalues: Vec<f64>,
}

impl MixedEngine {
    fn step(
        &mut self,
        eff: &EffectiveOperators,
        db: &ComplexIncrementBlock,
        dt: f64,
        tol: &Tolerances,
        diag: &mut RunDiagnostics,
    ) -> Result<(), StepError> {
        let s = postprocess_mixed(raw_mixed_update(&self.rho, eff, db, dt), tol)?;
        diag.max_raw_trace_defect = diag.max_raw_trace_defect.max(s.raw_trace_defect);
        diag.max_raw_hermiticity_defect = diag.max_raw_hermiticity_defect.max(s.raw_hermiticity_defect);
        diag.min_eigenvalue = diag.min_eigenvalue.min(s.min_eigenvalue());
        self.rho = s.state;
        self.eigenvalues = s.eigenvalues;
        Ok(())
    }
}

enum Engine {
    Mixed(MixedEngine),
    Pure(PureEngine),
    Pair(MixedEngine, PureEngine),
}

impl Engine {
    /// The recorded system state and its decreasing eigenvalues.
    fn current(&self, d: usize, tol: &Tolerances) -> Result<(DensityMatrix, Vec<f64>), StepError> {
        match self {
            Engine::Mixed(m) | Engine::Pair(m, _) => Ok((m.rho.clone(), m.eigenvalues.clone())),
            Engine::Pure(p) => {
                let rho = p.reduced(d);
                let values = hermitian_eigen(&rho, tol)?.values;
                Ok((DensityMatrix::from_trusted(rho), values))
            }
        }
    }

    fn system_matrix(&self, d: usize) -> ComplexMatrix {
        match self {
            Engine::Mixed(m) | Engine::Pair(m, _) => m.rho.matrix().clone(),
            Engine::Pure(p) => p.reduced(d),
        }
    }

    fn deviation(&self, d: usize) -> Option<f64> {
        match self {
            Engine::Pair(m, p) => Some((&p.reduced(d) - m.rho.matrix()).frobenius_norm()),
            _ => None,
        }
    }
}

fn mixed_engine(rho: DensityMatrix, tol: &Tolerances) -> Result<MixedEngine, TrajectoryError> {
    let eigenvalues = hermitian_eigen(&rho, tol)
        .map_err(TrajectoryError::InitialState)?
        .values;
    Ok(MixedEngine { rho, eigenvalues })
}

/// Integrates one trajectory, drawing one increment block per step from
/// `source`.
pub fn run_trajectory<S: IncrementSource + ?Sized>(
    init: &InitialState,
    ops: &ModelOperators,
    params: &RunParams,
    source: &mut S,
) -> Result<TrajectoryRecord, TrajectoryError> {
    params.validate()?;
    let engine = match init {
        InitialState::Mixed(rho) => {
            if rho.dim() != ops.dim() {
                return Err(TrajectoryError::DimensionMismatch {
                    expected: ops.dim(),
                    found: rho.dim(),
                });
            }
            Engine::Mixed(mixed_engine(rho.clone(), &params.tolerances)?)
        }
        InitialState::Pure { psi, env_dim } => Engine::Pure(PureEngine::new(psi.clone(), *env_dim, ops)?),
    };
    integrate(engine, ops, params, source)
}

/// Runs the pure equation on `S ⊗ S'` from `Ψ0` and the mixed equation on
/// `S` from `Tr_{S'} |Ψ0⟩⟨Ψ0|` on the same increments. The returned record
/// holds the mixed route; `purification_deviations` and
/// `diagnostics.max_purification_deviation` compare it with the reduced pure
/// route.
pub fn run_purification_pair<S: IncrementSource + ?Sized>(
    psi0: &[C64],
    env_dim: usize,
    ops: &ModelOperators,
    params: &RunParams,
    source: &mut S,
) -> Result<TrajectoryRecord, TrajectoryError> {
    params.validate()?;
    let pure = PureEngine::new(psi0.to_vec(), env_dim, ops)?;
    let rho0 = DensityMatrix::from_trusted(pure.reduced(ops.dim()));
    let mixed = mixed_engine(rho0, &params.tolerances)?;
    integrate(Engine::Pair(mixed, pure), ops, params, source)
}

/// `max_t ‖Tr_{S'}|Ψ_t⟩⟨Ψ_t| - ρ_t‖_F` over every step of a purification
/// pair run.
pub fn purification_check<S: IncrementSource + ?Sized>(
    psi0: &[C64],
    env_dim: usize,
    ops: &ModelOperators,
    params: &RunParams,
    source: &mut S,
) -> Result<f64, TrajectoryError> {
    run_purification_pair(psi0, env_dim, ops, params, source)
        .map(|r| r.diagnostics.max_purification_deviation)
}

fn integrate<S: IncrementSource + ?Sized>(
    mut engine: Engine,
    ops: &ModelOperators,
    params: &RunParams,
    source: &mut S,
) -> Result<TrajectoryRecord, TrajectoryError> {
    let d = ops.dim();
    let k_ch = ops.n_channels();
    let tol = params.tolerances;
    let dt = params.dt;
    let n_steps = params.n_steps();
    let mut diag = RunDiagnostics::default();

    let (rho0, eig0) = engine
        .current(d, &tol)
        .map_err(|source| TrajectoryError::Step { step: 0, t: 0.0, source })?;
    let mut ledger = DoobMeyerLedger::new(&rho0, &params.orders)?;
    let mut record = TrajectoryRecord {
        times: vec![0.0],
        min_eigenvalues: vec![eig0.last().copied().unwrap_or(0.0)],
        spectrum: SpectrumTrace::new(),
        states: Vec::new(),
        purification_deviations: Vec::new(),
        ledger: DoobMeyerLedger::new(&rho0, &[])?,
        diagnostics: diag,
    };
    diag.min_eigenvalue = record.min_eigenvalues[0];
    record.spectrum.push(0.0, eig0);
    record.states.push(rho0);
    if let Some(dev) = engine.deviation(d) {
        record.purification_deviations.push(dev);
        diag.max_purification_deviation = dev;
    }

    for k in 1..=n_steps {
        let t = k as f64 * dt;
        let fail = |source: StepError| TrajectoryError::Step { step: k, t, source };
        let db = source
            .next_block(k_ch, dt)
            .map_err(|source| TrajectoryError::Noise { step: k, source })?;
        if db.n() != k_ch {
            return Err(fail(StepError::ChannelMismatch {
                expected: k_ch,
                found: db.n(),
            }));
        }
        let pre = engine.system_matrix(d);
        let eff = effective_operators(&pre, ops).map_err(fail)?;
        ledger.update(&pre, &eff, &db, dt)?;
        match &mut engine {
            Engine::Mixed(m) => m.step(&eff, &db, dt, &tol, &mut diag).map_err(fail)?,
            Engine::Pure(p) => p.step(&db, dt, &mut diag).map_err(fail)?,
            Engine::Pair(m, p) => {
                m.step(&eff, &db, dt, &tol, &mut diag).map_err(fail)?;
                p.step(&db, dt, &mut diag).map_err(fail)?;
            }
        }
        let dev = engine.deviation(d);
        if let Some(dev) = dev {
            diag.max_purification_deviation = diag.max_purification_deviation.max(dev);
        }
        if params.is_record_step(k) {
            let (rho, eig) = engine.current(d, &tol).map_err(fail)?;
            let min = eig.last().copied().unwrap_or(0.0);
            diag.min_eigenvalue = diag.min_eigenvalue.min(min);
            ledger.snapshot(&rho);
            record.times.push(t);
            record.min_eigenvalues.push(min);
            record.spectrum.push(t, eig);
            record.states.push(rho);
            if let Some(dev) = dev {
                record.purification_deviations.push(dev);
            }
        }
    }
    diag.steps = n_steps;
    record.ledger = ledger;
    record.diagnostics = diag;
    Ok(record)
}
