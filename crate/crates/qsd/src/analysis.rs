//! Ensemble report: per-path checks, ensemble statistics and diagnostics,
//! shared by `run` (from memory) and `report` (from CSVs).

use qsd_core::lindblad::{unraveling_check, MIN_UNRAVELING_TRAJECTORIES};
use qsd_core::linalg::trace_moment;
use qsd_core::moments::{doob_meyer_residual, submartingale_test, MIN_SUBMARTINGALE_TRAJECTORIES, SUMMAND_FLOOR};
use qsd_core::spectrum::{convergence_diagnostic, default_tail_window, mass_deficit, LimitSpectrum, CONV_TOL};
use qsd_core::TrajectoryRecord;
use serde::Serialize;

use crate::config::{Mode, RunConfig};

pub const SUBMARTINGALE_CHECKPOINTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Info,
    #[serde(rename = "insufficient trajectories")]
    Insufficient,
    Skipped,
}

impl Status {
    pub fn of(ok: bool) -> Self {
        if ok {
            Self::Pass
        } else {
            Self::Fail
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Pass => "PASS",
            Self::Fail => "FAIL",
            Self::Info => "info",
            Self::Insufficient => "insufficient trajectories",
            Self::Skipped => "skipped",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Section<T> {
    Computed { result: T },
    Skipped { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbortEntry {
    pub traj_id: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoobMeyerOrder {
    pub order: u32,
    /// Max over paths and records of `|Tr ρ^m - M - S|`.
    pub max_residual: f64,
    pub mean_max_residual: f64,
    pub min_drift_integrand: f64,
    /// Max over paths of `Tr ρ^m` on the record grid.
    pub max_trace_moment: f64,
    pub min_trace_moment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnravelingPointJson {
    pub t: f64,
    pub deviation: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnravelingJson {
    pub n_traj: usize,
    pub slack: f64,
    pub max_deviation: f64,
    pub max_excess: f64,
    pub within: bool,
    pub points: Vec<UnravelingPointJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointJson {
    pub t: f64,
    pub mean_moment: f64,
    pub moment_se: f64,
    pub mean_martingale: f64,
    pub martingale_se: f64,
    pub martingale_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IncrementJson {
    pub s: f64,
    pub t: f64,
    pub mean_diff: f64,
    pub se: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubmartingaleJson {
    pub order: u32,
    pub initial: f64,
    pub martingale_ok: bool,
    pub submartingale_ok: bool,
    pub checkpoints: Vec<CheckpointJson>,
    pub increments: Vec<IncrementJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathConvergence {
    pub traj_id: u64,
    pub limits: Vec<f64>,
    pub oscillations: Vec<f64>,
    pub converged: bool,
    pub mass_deficit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceJson {
    pub conv_tol: f64,
    pub window: usize,
    pub converged_fraction: f64,
    pub paths: Vec<PathConvergence>,
}

/// Aggregated numerical health. Raw per-step defects are only known for a
/// live run, not when rebuilding from CSVs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsJson {
    pub steps_per_trajectory: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_raw_trace_defect: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_raw_hermiticity_defect: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_raw_norm_defect: Option<f64>,
    pub min_eigenvalue: f64,
    pub max_purification_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub n_traj: u64,
    pub completed: usize,
    pub mode: Mode,
    pub checks: Vec<Check>,
    pub aborted: Vec<AbortEntry>,
    pub doob_meyer: Vec<DoobMeyerOrder>,
    pub unraveling: Section<UnravelingJson>,
    pub submartingale: Section<Vec<SubmartingaleJson>>,
    pub convergence: Section<ConvergenceJson>,
    pub diagnostics: DiagnosticsJson,
}

impl Report {
    /// Plain-text table of the checks.
    pub fn table(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        let mut out = format!(
            "{} of {} trajectories completed ({:?} mode)\n",
            self.completed, self.n_traj, self.mode
        );
        for c in &self.checks {
            out.push_str(&format!("{:<width$}  {:<24}  {}\n", c.name, c.status.label(), c.detail));
        }
        out
    }
}

/// Ten checkpoints evenly spread over the record grid (after `t = 0`).
pub fn checkpoint_times(times: &[f64]) -> Vec<f64> {
    let last = times.len().saturating_sub(1);
    let mut idx: Vec<usize> = (1..=SUBMARTINGALE_CHECKPOINTS)
        .map(|i| (i * last + SUBMARTINGALE_CHECKPOINTS / 2) / SUBMARTINGALE_CHECKPOINTS)
        .filter(|&i| i > 0)
        .collect();
    idx.dedup();
    idx.into_iter().map(|i| times[i]).collect()
}

fn fmt(x: f64) -> String {
    format!("{x:.3e}")
}

/// Builds the report. `ids` are the trajectory ids of `records`;
/// `raw_diagnostics` says whether `records[i].diagnostics` hold live values.
pub fn analyze(
    cfg: &RunConfig,
    ids: &[u64],
    records: &[TrajectoryRecord],
    aborted: Vec<AbortEntry>,
    raw_diagnostics: bool,
    mut checks: Vec<Check>,
) -> Report {
    let tol = cfg.params.tolerances;
    let n = records.len();

    if !aborted.is_empty() {
        checks.push(Check {
            name: "numerical_aborts".into(),
            status: Status::Fail,
            detail: format!("{} trajectories aborted (first: {})", aborted.len(), aborted[0].traj_id),
        });
    }

    let orders = cfg.params.orders.clone();
    let mut doob_meyer: Vec<DoobMeyerOrder> = orders
        .iter()
        .map(|&order| DoobMeyerOrder {
            order,
            max_residual: 0.0,
            mean_max_residual: 0.0,
            min_drift_integrand: f64::INFINITY,
            max_trace_moment: f64::NEG_INFINITY,
            min_trace_moment: f64::INFINITY,
        })
        .collect();
    let mut monotone = true;
    for r in records {
        if let Ok(res) = doob_meyer_residual(r) {
            for (slot, (_, v)) in doob_meyer.iter_mut().zip(res) {
                slot.max_residual = slot.max_residual.max(v);
                slot.mean_max_residual += v / n as f64;
            }
        }
        let rows = r.ledger.history();
        for (i, slot) in doob_meyer.iter_mut().enumerate() {
            for row in rows {
                slot.min_drift_integrand = slot.min_drift_integrand.min(row.drift_integrands[i]);
            }
            monotone &= rows
                .windows(2)
                .zip(r.times.windows(2))
                .all(|(w, t)| w[1].increasing[i] - w[0].increasing[i] >= SUMMAND_FLOOR * (t[1] - t[0]));
            for s in &r.states {
                let tr = trace_moment(s, slot.order).unwrap_or(f64::NAN);
                slot.max_trace_moment = slot.max_trace_moment.max(tr);
                slot.min_trace_moment = slot.min_trace_moment.min(tr);
            }
        }
    }
    let worst = doob_meyer.iter().map(|o| o.max_residual).fold(0.0, f64::max);
    checks.push(Check {
        name: "doob_meyer_residual".into(),
        status: Status::Info,
        detail: format!("max |Tr rho^m - M - S| = {}", fmt(worst)),
    });
    let min_integrand = doob_meyer.iter().map(|o| o.min_drift_integrand).fold(f64::INFINITY, f64::min);
    checks.push(Check {
        name: "increasing_process_monotone".into(),
        status: Status::of(monotone && min_integrand >= SUMMAND_FLOOR),
        detail: format!("min drift integrand = {}", fmt(min_integrand)),
    });
    let upper = 1.0 + 10.0 * tol.psd;
    let bounded = doob_meyer
        .iter()
        .all(|o| n == 0 || (o.min_trace_moment >= 0.0 && o.max_trace_moment <= upper));
    checks.push(Check {
        name: "trace_moments_bounded".into(),
        status: Status::of(bounded),
        detail: format!("0 <= Tr rho^m <= {upper}"),
    });

    let mut diagnostics = DiagnosticsJson {
        steps_per_trajectory: cfg.params.n_steps(),
        max_raw_trace_defect: raw_diagnostics.then_some(0.0),
        max_raw_hermiticity_defect: raw_diagnostics.then_some(0.0),
        max_raw_norm_defect: raw_diagnostics.then_some(0.0),
        min_eigenvalue: f64::INFINITY,
        max_purification_deviation: 0.0,
    };
    for r in records {
        let d = &r.diagnostics;
        let up = |slot: &mut Option<f64>, v: f64| {
            if let Some(s) = slot {
                *s = s.max(v);
            }
        };
        up(&mut diagnostics.max_raw_trace_defect, d.max_raw_trace_defect);
        up(&mut diagnostics.max_raw_hermiticity_defect, d.max_raw_hermiticity_defect);
        up(&mut diagnostics.max_raw_norm_defect, d.max_raw_norm_defect);
        diagnostics.min_eigenvalue = diagnostics.min_eigenvalue.min(d.min_eigenvalue);
        diagnostics.max_purification_deviation = diagnostics.max_purification_deviation.max(d.max_purification_deviation);
    }
    checks.push(Check {
        name: "positivity".into(),
        status: if tol.psd_hard.is_finite() {
            Status::of(diagnostics.min_eigenvalue >= tol.psd_hard)
        } else {
            Status::Info
        },
        detail: format!("min eigenvalue = {}", fmt(diagnostics.min_eigenvalue)),
    });
    if cfg.mode == Mode::PurificationCheck {
        checks.push(Check {
            name: "purification_match".into(),
            status: Status::Info,
            detail: format!(
                "max ||Tr_S' |Psi><Psi| - rho||_F = {}",
                fmt(diagnostics.max_purification_deviation)
            ),
        });
    }

    let slack = cfg.params.dt;
    let unraveling = if n < MIN_UNRAVELING_TRAJECTORIES {
        checks.push(Check {
            name: "unraveling".into(),
            status: Status::Insufficient,
            detail: format!("need {MIN_UNRAVELING_TRAJECTORIES}, have {n}"),
        });
        Section::Skipped {
            reason: format!("insufficient trajectories: need {MIN_UNRAVELING_TRAJECTORIES}, have {n}"),
        }
    } else {
        match unraveling_check(records, &cfg.ops, &tol) {
            Ok(rep) => {
                let within = rep.within(slack);
                checks.push(Check {
                    name: "unraveling".into(),
                    status: Status::of(within),
                    detail: format!("max deviation = {}, max excess over 3 SE = {}", fmt(rep.max_deviation()), fmt(rep.max_excess())),
                });
                Section::Computed {
                    result: UnravelingJson {
                        n_traj: rep.n_traj,
                        slack,
                        max_deviation: rep.max_deviation(),
                        max_excess: rep.max_excess(),
                        within,
                        points: rep
                            .points
                            .iter()
                            .map(|p| UnravelingPointJson {
                                t: p.t,
                                deviation: p.deviation,
                                se: p.se,
                            })
                            .collect(),
                    },
                }
            }
            Err(e) => {
                checks.push(Check {
                    name: "unraveling".into(),
                    status: Status::Fail,
                    detail: e.to_string(),
                });
                Section::Skipped { reason: e.to_string() }
            }
        }
    };

    let submartingale = if n < MIN_SUBMARTINGALE_TRAJECTORIES {
        for name in ["martingale", "submartingale"] {
            checks.push(Check {
                name: name.into(),
                status: Status::Insufficient,
                detail: format!("need {MIN_SUBMARTINGALE_TRAJECTORIES}, have {n}"),
            });
        }
        Section::Skipped {
            reason: format!("insufficient trajectories: need {MIN_SUBMARTINGALE_TRAJECTORIES}, have {n}"),
        }
    } else {
        let checkpoints = checkpoint_times(&records[0].times);
        let reports: Result<Vec<_>, _> = orders.iter().map(|&m| submartingale_test(records, m, &checkpoints)).collect();
        match reports {
            Ok(reports) => {
                let mart = reports.iter().all(|r| r.martingale_ok());
                let sub = reports.iter().all(|r| r.submartingale_ok());
                checks.push(Check {
                    name: "martingale".into(),
                    status: Status::of(mart),
                    detail: format!("mean M^(m) within 3 SE of Tr rho0^m at {} checkpoints", checkpoints.len()),
                });
                checks.push(Check {
                    name: "submartingale".into(),
                    status: Status::of(sub),
                    detail: "mean Tr rho^m increments >= -3 SE".into(),
                });
                Section::Computed {
                    result: reports
                        .iter()
                        .map(|r| SubmartingaleJson {
                            order: r.order,
                            initial: r.initial,
                            martingale_ok: r.martingale_ok(),
                            submartingale_ok: r.submartingale_ok(),
                            checkpoints: r
                                .checkpoints
                                .iter()
                                .map(|c| CheckpointJson {
                                    t: c.t,
                                    mean_moment: c.moment.mean,
                                    moment_se: c.moment.se,
                                    mean_martingale: c.martingale.mean,
                                    martingale_se: c.martingale.se,
                                    martingale_ok: c.martingale_ok,
                                })
                                .collect(),
                            increments: r
                                .increments
                                .iter()
                                .map(|c| IncrementJson {
                                    s: c.s,
                                    t: c.t,
                                    mean_diff: c.diff.mean,
                                    se: c.diff.se,
                                    ok: c.ok,
                                })
                                .collect(),
                        })
                        .collect(),
                }
            }
            Err(e) => {
                checks.push(Check {
                    name: "martingale".into(),
                    status: Status::Fail,
                    detail: e.to_string(),
                });
                Section::Skipped { reason: e.to_string() }
            }
        }
    };

    let convergence = match records.first() {
        None => Section::Skipped {
            reason: "no completed trajectories".into(),
        },
        Some(first) => {
            let window = default_tail_window(first.spectrum.len());
            let paths: Result<Vec<_>, _> = ids
                .iter()
                .zip(records)
                .map(|(&traj_id, r)| {
                    convergence_diagnostic(&r.spectrum, window).map(|c| PathConvergence {
                        traj_id,
                        converged: c.converged(CONV_TOL),
                        mass_deficit: mass_deficit(&LimitSpectrum::from_limits(&c.limits, CONV_TOL)),
                        limits: c.limits,
                        oscillations: c.oscillations,
                    })
                })
                .collect();
            match paths {
                Ok(paths) => {
                    let frac = paths.iter().filter(|p| p.converged).count() as f64 / paths.len() as f64;
                    checks.push(Check {
                        name: "spectrum_convergence".into(),
                        status: Status::Info,
                        detail: format!("{:.1}% of paths within {CONV_TOL} over the last {window} records", 100.0 * frac),
                    });
                    Section::Computed {
                        result: ConvergenceJson {
                            conv_tol: CONV_TOL,
                            window,
                            converged_fraction: frac,
                            paths,
                        },
                    }
                }
                Err(e) => Section::Skipped { reason: e.to_string() },
            }
        }
    };

    Report {
        n_traj: cfg.n_traj,
        completed: n,
        mode: cfg.mode,
        checks,
        aborted,
        doob_meyer,
        unraveling,
        submartingale,
        convergence,
        diagnostics,
    }
}
