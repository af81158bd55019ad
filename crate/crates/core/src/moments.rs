//! Scalar moment processes `Tr ρ_t^m` and their Doob–Meyer decomposition.
//!
//! Along a trajectory,
//!
//! ```text
//! d Tr ρ^m = 2m Σ_k Re(Tr[ρ^m L̃_k] dB_k)
//!          + 2m Σ_k Σ_{m'=1}^{m-1} Tr[ρ^{m'} L̃_k ρ^{m-m'} L̃_k†] dt
//! ```
//!
//! The first term integrates to the martingale part `M^(m)`, the second to
//! the increasing part `S^(m)`. Every drift summand is a squared Frobenius
//! norm and hence non-negative. All integrands are evaluated at the pre-step
//! state (Itô convention).

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::linalg::{
    hermitian_eigen, power_traces, resolvent_tail_bound, trace_moment, ComplexMatrix,
    DensityMatrix, LinalgError, Tolerances,
};
use crate::noise::ComplexIncrementBlock;
use crate::stats::{jackknife_mean, Estimate};
use crate::trajectory::{mixed_drift, mixed_noise, EffectiveOperators, TrajectoryRecord};

/// Tolerance on individual drift summands, which are non-negative exactly.
pub const SUMMAND_FLOOR: f64 = -1e-12;

/// Absolute slack added to `3·SE` ensemble comparisons, so that pathwise
/// constant quantities (SE = 0) are not failed by rounding.
pub const ENSEMBLE_ABS_SLACK: f64 = 1e-12;

/// Minimum ensemble size for the martingale and submartingale tests.
pub const MIN_SUBMARTINGALE_TRAJECTORIES: usize = 100;

/// Target for the geometric tail bound of the truncated resolvent series.
pub const RESOLVENT_TAIL_TARGET: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MomentsError {
    #[error("moment order {order} is below the minimum {min}")]
    InvalidOrder { order: u32, min: u32 },
    #[error("order {0} is not supported by the power-step oracle (supported: 2, 3)")]
    UnsupportedOrder(u32),
    #[error("order {0} is not tracked by the ledger")]
    UntrackedOrder(u32),
    #[error("increment block has {found} channels, expected {expected}")]
    ChannelMismatch { expected: usize, found: usize },
    #[error("ledger has {ledger} rows but the record has {states} states")]
    GridMismatch { ledger: usize, states: usize },
    #[error("time {0} is not on the record grid")]
    TimeNotOnGrid(f64),
    #[error("records do not share one time grid (trajectory {0})")]
    InconsistentGrid(usize),
    #[error("need at least {required} trajectories, got {found}")]
    TooFewTrajectories { found: usize, required: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

fn check_order(m: u32) -> Result<(), MomentsError> {
    if m < 2 {
        Err(MomentsError::InvalidOrder { order: m, min: 2 })
    } else {
        Ok(())
    }
}

fn check_channels(eff: &EffectiveOperators, db: &ComplexIncrementBlock) -> Result<(), MomentsError> {
    if db.n() != eff.ltilde.len() {
        return Err(MomentsError::ChannelMismatch {
            expected: eff.ltilde.len(),
            found: db.n(),
        });
    }
    Ok(())
}

/// Drift summands `Tr[ρ^{m'} L̃_k ρ^{m-m'} L̃_k†]`, indexed `[k][m'-1]`.
fn drift_summands(powers: &[ComplexMatrix], eff: &EffectiveOperators, m: usize) -> Vec<Vec<f64>> {
    eff.ltilde
        .iter()
        .map(|l| {
            let ld = l.adjoint();
            (1..m)
                .map(|mp| {
                    let left = &powers[mp] * l;
                    let right = &powers[m - mp] * &ld;
                    left.trace_product(&right).re
                })
                .collect()
        })
        .collect()
}

/// Individual drift summands for order `m`, indexed `[k][m'-1]`.
pub fn moment_drift_summands(
    rho: &ComplexMatrix,
    eff: &EffectiveOperators,
    m: u32,
) -> Result<Vec<Vec<f64>>, MomentsError> {
    check_order(m)?;
    let powers = rho.powers(m as usize);
    Ok(drift_summands(&powers, eff, m as usize))
}

/// `2m Σ_k Σ_{m'=1}^{m-1} Tr[ρ^{m'} L̃_k ρ^{m-m'} L̃_k†]`.
pub fn moment_drift(rho: &ComplexMatrix, eff: &EffectiveOperators, m: u32) -> Result<f64, MomentsError> {
    let summands = moment_drift_summands(rho, eff, m)?;
    Ok(2.0 * f64::from(m) * summands.iter().flatten().sum::<f64>())
}

/// `2m Σ_k Re(Tr[ρ^m L̃_k] dB_k)`.
pub fn moment_diffusion(
    rho: &ComplexMatrix,
    eff: &EffectiveOperators,
    m: u32,
    db: &ComplexIncrementBlock,
) -> Result<f64, MomentsError> {
    check_order(m)?;
    check_channels(eff, db)?;
    let pm = rho.powers(m as usize).pop().expect("powers has m+1 entries");
    Ok(diffusion_from_power(&pm, eff, m, db))
}

fn diffusion_from_power(pm: &ComplexMatrix, eff: &EffectiveOperators, m: u32, db: &ComplexIncrementBlock) -> f64 {
    2.0 * f64::from(m)
        * eff
            .ltilde
            .iter()
            .zip(&db.values)
            .map(|(l, b)| (pm.trace_product(l) * b).re)
            .sum::<f64>()
}

/// Ledger values at one recorded grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerRow {
    /// `Tr ρ_t^m` for each tracked order, computed from the state.
    pub trace_moments: Vec<f64>,
    pub martingale: Vec<f64>,
    pub increasing: Vec<f64>,
    /// Drift integrand of the last step before this point (0 at `t = 0`).
    pub drift_integrands: Vec<f64>,
}

/// Pathwise Doob–Meyer decomposition `Tr ρ_t^m = M_t + S_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DoobMeyerLedger {
    orders: Vec<u32>,
    initial: Vec<f64>,
    martingale: Vec<f64>,
    increasing: Vec<f64>,
    last_drift: Vec<f64>,
    min_drift_integrand: f64,
    min_drift_summand: f64,
    steps: u64,
    history: Vec<LedgerRow>,
}

impl DoobMeyerLedger {
    /// Starts `M = Tr ρ0^m`, `S = 0` for each order and records the `t = 0`
    /// row.
    pub fn new(rho0: &ComplexMatrix, orders: &[u32]) -> Result<Self, MomentsError> {
        for &m in orders {
            check_order(m)?;
        }
        let initial = orders
            .iter()
            .map(|&m| trace_moment(rho0, m))
            .collect::<Result<Vec<_>, _>>()?;
        let mut ledger = Self {
            orders: orders.to_vec(),
            martingale: initial.clone(),
            increasing: vec![0.0; orders.len()],
            last_drift: vec![0.0; orders.len()],
            initial,
            min_drift_integrand: f64::INFINITY,
            min_drift_summand: f64::INFINITY,
            steps: 0,
            history: Vec::new(),
        };
        ledger.snapshot(rho0);
        Ok(ledger)
    }

    /// Rebuilds a ledger from stored rows (e.g. read back from disk). The
    /// minimum integrand and summand are taken over the recorded drift
    /// integrands only.
    pub fn from_rows(orders: &[u32], rows: Vec<LedgerRow>) -> Result<Self, MomentsError> {
        for &m in orders {
            check_order(m)?;
        }
        let n = orders.len();
        let first = rows.first().ok_or(MomentsError::GridMismatch { ledger: 0, states: 1 })?;
        if rows.iter().any(|r| {
            r.trace_moments.len() != n
                || r.martingale.len() != n
                || r.increasing.len() != n
                || r.drift_integrands.len() != n
        }) {
            return Err(MomentsError::GridMismatch {
                ledger: rows.len(),
                states: rows.len(),
            });
        }
        let last = rows.last().expect("non-empty");
        let min_drift = rows
            .iter()
            .skip(1)
            .flat_map(|r| r.drift_integrands.iter().copied())
            .fold(f64::INFINITY, f64::min);
        Ok(Self {
            orders: orders.to_vec(),
            initial: first.martingale.clone(),
            martingale: last.martingale.clone(),
            increasing: last.increasing.clone(),
            last_drift: vec![0.0; n],
            min_drift_integrand: min_drift,
            min_drift_summand: min_drift,
            steps: 0,
            history: rows,
        })
    }

    pub fn orders(&self) -> &[u32] {
        &self.orders
    }

    pub fn index_of(&self, m: u32) -> Option<usize> {
        self.orders.iter().position(|&o| o == m)
    }

    /// `Tr ρ0^m` per order.
    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn martingale(&self) -> &[f64] {
        &self.martingale
    }

    pub fn increasing(&self) -> &[f64] {
        &self.increasing
    }

    pub fn history(&self) -> &[LedgerRow] {
        &self.history
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Smallest drift integrand seen over all steps (`+∞` before any step).
    pub fn min_drift_integrand(&self) -> f64 {
        self.min_drift_integrand
    }

    /// Smallest individual drift summand seen over all steps.
    pub fn min_drift_summand(&self) -> f64 {
        self.min_drift_summand
    }

    /// Advances `M` and `S` by one step from the pre-step state.
    pub fn update(
        &mut self,
        rho_pre: &ComplexMatrix,
        eff: &EffectiveOperators,
        db: &ComplexIncrementBlock,
        dt: f64,
    ) -> Result<(), MomentsError> {
        check_channels(eff, db)?;
        let max = self.orders.iter().copied().max().unwrap_or(0) as usize;
        if max == 0 {
            self.steps += 1;
            return Ok(());
        }
        let powers = rho_pre.powers(max);
        for (i, &m) in self.orders.iter().enumerate() {
            let m_us = m as usize;
            let summands = drift_summands(&powers, eff, m_us);
            let mut total = 0.0;
            for s in summands.iter().flatten() {
                self.min_drift_summand = self.min_drift_summand.min(*s);
                total += s;
            }
            let drift = 2.0 * f64::from(m) * total;
            self.min_drift_integrand = self.min_drift_integrand.min(drift);
            self.last_drift[i] = drift;
            self.martingale[i] += diffusion_from_power(&powers[m_us], eff, m, db);
            self.increasing[i] += drift * dt;
        }
        self.steps += 1;
        Ok(())
    }

    /// Records the current `M`, `S` together with `Tr ρ^m` of the given
    /// (post-step) state.
    pub fn snapshot(&mut self, rho: &ComplexMatrix) {
        let max = self.orders.iter().copied().max().unwrap_or(1) as usize;
        let traces = power_traces(rho, max.max(1));
        let drift = core::mem::replace(&mut self.last_drift, vec![0.0; self.orders.len()]);
        self.history.push(LedgerRow {
            trace_moments: self.orders.iter().map(|&m| traces[m as usize]).collect(),
            martingale: self.martingale.clone(),
            increasing: self.increasing.clone(),
            drift_integrands: drift,
        });
    }
}

/// Per tracked order, `max_t |Tr ρ_t^m - M_t - S_t|` over the record grid,
/// with `Tr ρ_t^m` recomputed from the stored states.
pub fn doob_meyer_residual(record: &TrajectoryRecord) -> Result<Vec<(u32, f64)>, MomentsError> {
    let rows = record.ledger.history();
    if rows.len() != record.states.len() || rows.len() != record.times.len() {
        return Err(MomentsError::GridMismatch {
            ledger: rows.len(),
            states: record.states.len(),
        });
    }
    let mut out: Vec<(u32, f64)> = record.ledger.orders().iter().map(|&m| (m, 0.0)).collect();
    for (row, state) in rows.iter().zip(&record.states) {
        for (i, (m, worst)) in out.iter_mut().enumerate() {
            let tr = trace_moment(state, *m)?;
            let r = (tr - row.martingale[i] - row.increasing[i]).abs();
            *worst = worst.max(r);
        }
    }
    Ok(out)
}

/// `d ρ^m` by expanding `(ρ + dρ)^m` to first order in `dt` with the Itô
/// products `dB_k dB_l* = 2δ_kl dt`, `dB_k dB_l = 0`.
///
/// `dρ` is the mixed-state increment with noise part
/// `N = Σ_k (L̃_k ρ dB_k + ρ L̃_k† dB_k*)`; a pair of noise factors at
/// positions `i < j` contributes `2 dt Σ_k (B_k X B_k† + B_k† X B_k)` with
/// `B_k = L̃_k ρ` and `X` the product of the `ρ` factors between them.
pub fn ito_expansion(
    rho: &ComplexMatrix,
    eff: &EffectiveOperators,
    db: &ComplexIncrementBlock,
    dt: f64,
    m: u32,
) -> Result<ComplexMatrix, MomentsError> {
    check_order(m)?;
    check_channels(eff, db)?;
    let m = m as usize;
    let powers = rho.powers(m);
    let mut d_rho = mixed_noise(rho, eff, db);
    d_rho.add_scaled(&mixed_drift(rho, eff), C64::new(dt, 0.0));

    let mut out = ComplexMatrix::zeros(rho.rows(), rho.cols());
    for i in 0..m {
        let term = &(&powers[i] * &d_rho) * &powers[m - 1 - i];
        out = &out + &term;
    }
    let bs: Vec<(ComplexMatrix, ComplexMatrix)> = eff
        .ltilde
        .iter()
        .map(|l| {
            let b = l * rho;
            let bd = b.adjoint();
            (b, bd)
        })
        .collect();
    for i in 0..m {
        for j in i + 1..m {
            let gap = &powers[j - i - 1];
            let mut pair = ComplexMatrix::zeros(rho.rows(), rho.cols());
            for (b, bd) in &bs {
                pair = &pair + &(&(b * gap) * bd);
                pair = &pair + &(&(bd * gap) * b);
            }
            let term = &(&powers[i] * &pair) * &powers[m - 1 - j];
            out.add_scaled(&term, C64::new(2.0 * dt, 0.0));
        }
    }
    Ok(out)
}

/// The closed form of `d ρ^m`:
///
/// ```text
/// 2 Σ_k Re(Σ_{r=0}^{m-1} ρ^r L̃_k ρ^{m-r} dB_k)
///   + { L̃(ρ^m) + 2 Σ_k ( Σ ρ^{m1} L̃_k ρ^{m2} L̃_k† ρ^{m3}
///                         + Σ ρ^{m1} L̃_k† ρ^{m2} L̃_k ρ^{m3} ) } dt
/// ```
///
/// with `m1 + m2 + m3 = m`, where the first sum runs over `m2 ≥ 1`,
/// `m1 + m3 ≥ 1` and the second over `m1, m2, m3 ≥ 1`. Here `2 Re X` means
/// `X + X†` and `L̃(·)` is the generator built from `L̃_k`, `H̃`.
pub fn closed_form_power_increment(
    rho: &ComplexMatrix,
    eff: &EffectiveOperators,
    db: &ComplexIncrementBlock,
    dt: f64,
    m: u32,
) -> Result<ComplexMatrix, MomentsError> {
    check_order(m)?;
    check_channels(eff, db)?;
    let m = m as usize;
    let powers = rho.powers(m);
    let pm = &powers[m];
    let mut out = ComplexMatrix::zeros(rho.rows(), rho.cols());
    for (l, b) in eff.ltilde.iter().zip(&db.values) {
        for r in 0..m {
            let x = (&(&powers[r] * l) * &powers[m - r]).scale(*b);
            out = &out + &x;
            out = &out + &x.adjoint();
        }
    }
    let mut drift = mixed_drift(pm, eff);
    for l in &eff.ltilde {
        let ld = l.adjoint();
        for m1 in 0..=m {
            for m2 in 0..=m - m1 {
                let m3 = m - m1 - m2;
                if m2 >= 1 && m1 + m3 >= 1 {
                    let t = &(&(&(&powers[m1] * l) * &powers[m2]) * &ld) * &powers[m3];
                    drift.add_scaled(&t, C64::new(2.0, 0.0));
                }
                if m1 >= 1 && m2 >= 1 && m3 >= 1 {
                    let t = &(&(&(&powers[m1] * &ld) * &powers[m2]) * l) * &powers[m3];
                    drift.add_scaled(&t, C64::new(2.0, 0.0));
                }
            }
        }
    }
    out.add_scaled(&drift, C64::new(dt, 0.0));
    Ok(out)
}

/// The drift of `d ρ²` in its displayed form
/// `L̃(ρ²) + 2 Σ_k (ρ L̃_k ρ L̃_k† + L̃_k ρ L̃_k† ρ)`.
pub fn squared_state_drift(rho: &ComplexMatrix, eff: &EffectiveOperators) -> ComplexMatrix {
    let rho2 = rho * rho;
    let mut drift = mixed_drift(&rho2, eff);
    for l in &eff.ltilde {
        let ld = l.adjoint();
        let a = &(&(rho * l) * rho) * &ld;
        let b = &(&(l * rho) * &ld) * rho;
        drift.add_scaled(&a, C64::new(2.0, 0.0));
        drift.add_scaled(&b, C64::new(2.0, 0.0));
    }
    drift
}

/// Scalar increment of `Tr ρ^m` over one step.
pub fn moment_increment(
    rho: &ComplexMatrix,
    eff: &EffectiveOperators,
    db: &ComplexIncrementBlock,
    dt: f64,
    m: u32,
) -> Result<f64, MomentsError> {
    Ok(moment_diffusion(rho, eff, m, db)? + moment_drift(rho, eff, m)? * dt)
}

/// Both routes to `d ρ^m` plus the scalar moment increment.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerStepComparison {
    pub order: u32,
    /// Route (a): Itô expansion of `(ρ + dρ)^m`.
    pub expansion: ComplexMatrix,
    /// Route (b): closed form.
    pub closed_form: ComplexMatrix,
    /// `d Tr ρ^m` from the moment formula.
    pub moment_increment: f64,
}

impl PowerStepComparison {
    pub fn difference(&self) -> ComplexMatrix {
        &self.expansion - &self.closed_form
    }

    /// `|Tr(expansion) - moment increment|`.
    pub fn trace_discrepancy(&self) -> f64 {
        (self.expansion.trace() - C64::new(self.moment_increment, 0.0)).norm()
    }

    /// Max-norm of the elementwise difference between the two routes.
    pub fn matrix_discrepancy(&self) -> f64 {
        self.difference().max_abs()
    }
}

/// Computes `d ρ^m` by the Itô expansion and by the closed form, together
/// with the moment increment, for `m ∈ {2, 3}`.
pub fn power_step_oracle(
    rho: &ComplexMatrix,
    eff: &EffectiveOperators,
    db: &ComplexIncrementBlock,
    dt: f64,
    m: u32,
) -> Result<PowerStepComparison, MomentsError> {
    if !(2..=3).contains(&m) {
        return Err(MomentsError::UnsupportedOrder(m));
    }
    Ok(PowerStepComparison {
        order: m,
        expansion: ito_expansion(rho, eff, db, dt, m)?,
        closed_form: closed_form_power_increment(rho, eff, db, dt, m)?,
        moment_increment: moment_increment(rho, eff, db, dt, m)?,
    })
}

/// One `(state, x)` evaluation of the truncated resolvent series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolventSample {
    pub x: f64,
    pub resolvent: f64,
    pub series: f64,
    pub order: usize,
    pub tail_bound: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResolventReport {
    pub samples: Vec<ResolventSample>,
    pub max_residual: f64,
    pub max_tail_bound: f64,
}

impl ResolventReport {
    /// Every residual lies within its geometric tail bound.
    pub fn within_bounds(&self) -> bool {
        self.samples.iter().all(|s| s.residual <= s.tail_bound)
    }
}

/// Smallest truncation order whose geometric tail bound is `≤ target`.
pub fn resolvent_truncation_order(dim: usize, x: f64, target: f64) -> usize {
    let mut order = 0;
    while resolvent_tail_bound(dim, x, order) > target {
        order += 1;
    }
    order
}

/// Compares `Tr (1 - xρ)^{-1}` (eigenvalue route) against
/// `Σ_{m=0}^{M} x^m Tr ρ^m` (power route) with `M` chosen so that the tail
/// bound is at most [`RESOLVENT_TAIL_TARGET`].
pub fn resolvent_series_check<'a, I>(
    states: I,
    xs: &[f64],
    tol: &Tolerances,
) -> Result<ResolventReport, MomentsError>
where
    I: IntoIterator<Item = &'a DensityMatrix>,
{
    let mut report = ResolventReport::default();
    for rho in states {
        let d = rho.dim();
        let eig = hermitian_eigen(rho, tol)?;
        for &x in xs {
            if !(x.abs() < 1.0) {
                return Err(LinalgError::ResolventOutOfRange { x }.into());
            }
            let resolvent: f64 = eig.values.iter().map(|p| 1.0 / (1.0 - x * p)).sum();
            let order = resolvent_truncation_order(d, x, RESOLVENT_TAIL_TARGET);
            let traces = power_traces(rho, order);
            let mut series = 0.0;
            let mut xm = 1.0;
            for tr in &traces {
                series += xm * tr;
                xm *= x;
            }
            let tail_bound = resolvent_tail_bound(d, x, order);
            let residual = (resolvent - series).abs();
            report.max_residual = report.max_residual.max(residual);
            report.max_tail_bound = report.max_tail_bound.max(tail_bound);
            report.samples.push(ResolventSample {
                x,
                resolvent,
                series,
                order,
                tail_bound,
                residual,
            });
        }
    }
    Ok(report)
}

/// Ensemble statistics at one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointStat {
    pub t: f64,
    pub moment: Estimate,
    pub martingale: Estimate,
    /// `|mean M_t - Tr ρ0^m| ≤ 3 SE`.
    pub martingale_ok: bool,
}

/// Paired difference of mean moments between two checkpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncrementStat {
    pub s: f64,
    pub t: f64,
    pub diff: Estimate,
    /// `diff ≥ -3 SE`.
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubmartingaleReport {
    pub order: u32,
    pub n_traj: usize,
    pub initial: f64,
    pub checkpoints: Vec<CheckpointStat>,
    pub increments: Vec<IncrementStat>,
}

impl SubmartingaleReport {
    pub fn martingale_ok(&self) -> bool {
        self.checkpoints.iter().all(|c| c.martingale_ok)
    }

    pub fn submartingale_ok(&self) -> bool {
        self.increments.iter().all(|c| c.ok)
    }
}

/// Locates `t` on a record grid.
pub fn grid_index(times: &[f64], t: f64) -> Option<usize> {
    let tol = 1e-9 * t.abs().max(1.0);
    times.iter().position(|&s| (s - t).abs() <= tol)
}

/// Ensemble martingale test for `M^(m)` and submartingale test for
/// `Tr ρ^m` over consecutive pairs of `checkpoints`.
pub fn submartingale_test(
    records: &[TrajectoryRecord],
    m: u32,
    checkpoints: &[f64],
) -> Result<SubmartingaleReport, MomentsError> {
    if records.len() < MIN_SUBMARTINGALE_TRAJECTORIES {
        return Err(MomentsError::TooFewTrajectories {
            found: records.len(),
            required: MIN_SUBMARTINGALE_TRAJECTORIES,
        });
    }
    let first = &records[0];
    let slot = first
        .ledger
        .index_of(m)
        .ok_or(MomentsError::UntrackedOrder(m))?;
    for (i, r) in records.iter().enumerate() {
        if r.times != first.times || r.ledger.history().len() != r.times.len() {
            return Err(MomentsError::InconsistentGrid(i));
        }
    }
    let indices = checkpoints
        .iter()
        .map(|&t| grid_index(&first.times, t).ok_or(MomentsError::TimeNotOnGrid(t)))
        .collect::<Result<Vec<_>, _>>()?;
    let initial = jackknife_mean(
        &records
            .iter()
            .map(|r| r.ledger.initial()[slot])
            .collect::<Vec<_>>(),
    )
    .mean;

    let column = |idx: usize, pick: fn(&LedgerRow, usize) -> f64| -> Vec<f64> {
        records
            .iter()
            .map(|r| pick(&r.ledger.history()[idx], slot))
            .collect()
    };
    let checkpoint_stats = indices
        .iter()
        .zip(checkpoints)
        .map(|(&idx, &t)| {
            let moment = jackknife_mean(&column(idx, |row, s| row.trace_moments[s]));
            let martingale = jackknife_mean(&column(idx, |row, s| row.martingale[s]));
            let martingale_ok =
                (martingale.mean - initial).abs() <= 3.0 * martingale.se + ENSEMBLE_ABS_SLACK;
            CheckpointStat {
                t,
                moment,
                martingale,
                martingale_ok,
            }
        })
        .collect();
    let increments = indices
        .windows(2)
        .zip(checkpoints.windows(2))
        .map(|(w, ts)| {
            let a = column(w[0], |row, s| row.trace_moments[s]);
            let b = column(w[1], |row, s| row.trace_moments[s]);
            let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| y - x).collect();
            let diff = jackknife_mean(&diffs);
            IncrementStat {
                s: ts[0],
                t: ts[1],
                diff,
                ok: diff.mean >= -3.0 * diff.se - ENSEMBLE_ABS_SLACK,
            }
        })
        .collect();
    Ok(SubmartingaleReport {
        order: m,
        n_traj: records.len(),
        initial,
        checkpoints: checkpoint_stats,
        increments,
    })
}
