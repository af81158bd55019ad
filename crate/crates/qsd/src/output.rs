//! Run directory layout: CSV and JSON emission, and reading a run back.
//!
//! ```text
//! config.json        resolved config (without out_dir / workers)
//! trajectories.csv   t, traj_id, re_ij, im_ij ..., min_eig, purity_residual
//! ledger.csv         t, traj_id, per order: tr_rho_m{m}, M_{m}, S_{m}, D_{m}; min_eig, purity_residual
//! spectrum.csv       t, traj_id, p_1 .. p_d
//! exact.csv          t, re_ij, im_ij ...
//! report.json        ensemble report
//! increments/        traj_<id>.bin when dump_increments is set
//! ```
//!
//! `D_{m}` is the drift integrand of the last step before the record.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use qsd_core::lindblad::evolve_exact_grid;
use qsd_core::linalg::{trace_moment, validate_density};
use qsd_core::moments::{grid_index, DoobMeyerLedger, LedgerRow};
use qsd_core::spectrum::SpectrumTrace;
use qsd_core::trajectory::RunDiagnostics;
use qsd_core::{ComplexMatrix, TrajectoryRecord, C64};

use crate::analysis::{analyze, AbortEntry, Check, Report, Status};
use crate::config::{ConfigFile, Mode, RunConfig};
use crate::ensemble::TrajectoryOutcome;
use crate::error::QsdError;
use crate::format::{fmt_f64, parse_f64};

pub const CONFIG_FILE: &str = "config.json";
pub const TRAJECTORIES_CSV: &str = "trajectories.csv";
pub const LEDGER_CSV: &str = "ledger.csv";
pub const SPECTRUM_CSV: &str = "spectrum.csv";
pub const EXACT_CSV: &str = "exact.csv";
pub const REPORT_JSON: &str = "report.json";
pub const SUMMARY_JSON: &str = "summary.json";

fn entry_headers(d: usize) -> Vec<String> {
    let mut h = Vec::with_capacity(2 * d * d);
    for i in 0..d {
        for j in 0..d {
            h.push(format!("re_{i}{j}"));
            h.push(format!("im_{i}{j}"));
        }
    }
    h
}

fn trajectory_header(d: usize) -> String {
    let mut h = vec!["t".to_owned(), "traj_id".to_owned()];
    h.extend(entry_headers(d));
    h.extend(["min_eig".to_owned(), "purity_residual".to_owned()]);
    h.join(",")
}

fn ledger_header(orders: &[u32]) -> String {
    let mut h = vec!["t".to_owned(), "traj_id".to_owned()];
    for m in orders {
        h.extend([format!("tr_rho_m{m}"), format!("M_{m}"), format!("S_{m}"), format!("D_{m}")]);
    }
    h.extend(["min_eig".to_owned(), "purity_residual".to_owned()]);
    h.join(",")
}

fn spectrum_header(d: usize) -> String {
    let mut h = vec!["t".to_owned(), "traj_id".to_owned()];
    h.extend((1..=d).map(|a| format!("p_{a}")));
    h.join(",")
}

fn exact_header(d: usize) -> String {
    let mut h = vec!["t".to_owned()];
    h.extend(entry_headers(d));
    h.join(",")
}

fn push_matrix(line: &mut String, m: &ComplexMatrix) {
    for z in m.as_slice() {
        let _ = write!(line, ",{},{}", fmt_f64(z.re), fmt_f64(z.im));
    }
}

/// The purity-residual column: `|1 - Tr ρ²|`, or the purification deviation
/// in a purification-check run.
fn purity_residual(mode: Mode, r: &TrajectoryRecord, k: usize) -> f64 {
    match mode {
        Mode::PurificationCheck => r.purification_deviations.get(k).copied().unwrap_or(f64::NAN),
        _ => (1.0 - trace_moment(&r.states[k], 2).unwrap_or(f64::NAN)).abs(),
    }
}

struct CsvFile {
    path: PathBuf,
    w: BufWriter<fs::File>,
}

impl CsvFile {
    fn create(path: PathBuf, header: &str) -> Result<Self, QsdError> {
        let f = fs::File::create(&path).map_err(|e| QsdError::io(&path, e))?;
        let mut out = Self {
            w: BufWriter::new(f),
            path,
        };
        out.line(header)?;
        Ok(out)
    }

    fn line(&mut self, s: &str) -> Result<(), QsdError> {
        self.w
            .write_all(s.as_bytes())
            .and_then(|()| self.w.write_all(b"\n"))
            .map_err(|e| QsdError::io(&self.path, e))
    }

    fn finish(mut self) -> Result<(), QsdError> {
        self.w.flush().map_err(|e| QsdError::io(&self.path, e))
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), QsdError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| QsdError::Parse(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| QsdError::io(path, e))
}

/// Writes every output of a finished ensemble and returns the report.
/// Aborted trajectories are listed in the report and absent from the CSVs.
pub fn write_run(cfg: &RunConfig, outcomes: Vec<TrajectoryOutcome>) -> Result<Report, QsdError> {
    let dir = &cfg.out_dir;
    fs::create_dir_all(dir).map_err(|e| QsdError::io(dir, e))?;
    write_json(&dir.join(CONFIG_FILE), &cfg.echo())?;

    let d = cfg.ops.dim();
    let mut traj = CsvFile::create(dir.join(TRAJECTORIES_CSV), &trajectory_header(d))?;
    let mut ledger = CsvFile::create(dir.join(LEDGER_CSV), &ledger_header(&cfg.params.orders))?;
    let mut spectrum = CsvFile::create(dir.join(SPECTRUM_CSV), &spectrum_header(d))?;
    if cfg.dump_increments {
        let inc = dir.join("increments");
        fs::create_dir_all(&inc).map_err(|e| QsdError::io(&inc, e))?;
    }

    let mut ids = Vec::new();
    let mut records = Vec::new();
    let mut aborted = Vec::new();
    for outcome in outcomes {
        if let Some(rec) = &outcome.increments {
            rec.write_to(&dir.join("increments").join(format!("traj_{}.bin", outcome.id)))?;
        }
        let r = match outcome.result {
            Ok(r) => r,
            Err(e) => {
                aborted.push(AbortEntry {
                    traj_id: outcome.id,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let id = outcome.id;
        for (k, (&t, state)) in r.times.iter().zip(&r.states).enumerate() {
            let tail = format!(",{},{}", fmt_f64(r.min_eigenvalues[k]), fmt_f64(purity_residual(cfg.mode, &r, k)));
            let mut line = format!("{},{id}", fmt_f64(t));
            push_matrix(&mut line, state);
            line.push_str(&tail);
            traj.line(&line)?;

            let row = &r.ledger.history()[k];
            let mut line = format!("{},{id}", fmt_f64(t));
            for i in 0..cfg.params.orders.len() {
                for v in [row.trace_moments[i], row.martingale[i], row.increasing[i], row.drift_integrands[i]] {
                    let _ = write!(line, ",{}", fmt_f64(v));
                }
            }
            line.push_str(&tail);
            ledger.line(&line)?;

            let mut line = format!("{},{id}", fmt_f64(t));
            for p in &r.spectrum.rows()[k] {
                let _ = write!(line, ",{}", fmt_f64(*p));
            }
            spectrum.line(&line)?;
        }
        ids.push(id);
        records.push(r);
    }
    traj.finish()?;
    ledger.finish()?;
    spectrum.finish()?;

    let times = cfg.params.record_times();
    let exact = evolve_exact_grid(&cfg.rho0, &cfg.ops, &times, &cfg.params.tolerances)
        .map_err(|e| QsdError::Validation(format!("exact evolution: {e}")))?;
    let mut ex = CsvFile::create(dir.join(EXACT_CSV), &exact_header(d))?;
    for (t, rho) in times.iter().zip(&exact) {
        let mut line = fmt_f64(*t);
        push_matrix(&mut line, rho);
        ex.line(&line)?;
    }
    ex.finish()?;

    let report = analyze(cfg, &ids, &records, aborted, true, Vec::new());
    write_json(&dir.join(REPORT_JSON), &report)?;
    Ok(report)
}

struct Table {
    path: PathBuf,
    /// Rows grouped by trajectory id, in file order: `(t, values)`.
    by_traj: BTreeMap<u64, Vec<(f64, Vec<f64>)>>,
}

fn read_table(path: PathBuf, header: &str) -> Result<Table, QsdError> {
    let text = fs::read_to_string(&path).map_err(|e| QsdError::io(&path, e))?;
    let mut lines = text.lines();
    let bad = |msg: String| QsdError::Parse(format!("{}: {msg}", path.display()));
    match lines.next() {
        Some(h) if h == header => {}
        other => return Err(bad(format!("unexpected header {other:?}"))),
    }
    let width = header.split(',').count();
    let mut by_traj: BTreeMap<u64, Vec<(f64, Vec<f64>)>> = BTreeMap::new();
    for (n, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != width {
            return Err(bad(format!("line {} has {} fields, expected {width}", n + 2, cells.len())));
        }
        let t = parse_f64(cells[0])?;
        let id: u64 = cells[1]
            .parse()
            .map_err(|_| bad(format!("line {}: bad traj_id {:?}", n + 2, cells[1])))?;
        let values = cells[2..].iter().map(|c| parse_f64(c)).collect::<Result<Vec<_>, _>>()?;
        by_traj.entry(id).or_default().push((t, values));
    }
    Ok(Table { path, by_traj })
}

fn same_grid(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(&x, &y)| grid_index(&[x], y).is_some())
}

/// Reads a run directory back and rebuilds the report, with extra checks
/// for grid integrity and state validity.
pub fn report_dir(dir: &Path) -> Result<Report, QsdError> {
    let file = ConfigFile::load(&dir.join(CONFIG_FILE))?;
    let cfg = RunConfig::resolve(file)?;
    let d = cfg.ops.dim();
    let orders = cfg.params.orders.clone();
    let grid = cfg.params.record_times();
    let traj = read_table(dir.join(TRAJECTORIES_CSV), &trajectory_header(d))?;
    let ledger = read_table(dir.join(LEDGER_CSV), &ledger_header(&orders))?;
    let spectrum = read_table(dir.join(SPECTRUM_CSV), &spectrum_header(d))?;
    let state_tol = cfg.params.tolerances.for_run_states();

    let mut ids = Vec::new();
    let mut records = Vec::new();
    let mut mismatched = Vec::new();
    let mut invalid = Vec::new();
    let all_ids: std::collections::BTreeSet<u64> = traj
        .by_traj
        .keys()
        .chain(ledger.by_traj.keys())
        .chain(spectrum.by_traj.keys())
        .copied()
        .collect();
    'traj: for &id in &all_ids {
        let empty = Vec::new();
        let rows = traj.by_traj.get(&id).unwrap_or(&empty);
        let lrows = ledger.by_traj.get(&id).unwrap_or(&empty);
        let srows = spectrum.by_traj.get(&id).unwrap_or(&empty);
        let times: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let ok = [lrows, srows]
            .iter()
            .all(|other| same_grid(&times, &other.iter().map(|r| r.0).collect::<Vec<_>>()))
            && same_grid(&times, &grid);
        if !ok {
            mismatched.push(id);
            continue;
        }
        let mut states = Vec::with_capacity(rows.len());
        let mut min_eigs = Vec::with_capacity(rows.len());
        let mut residuals = Vec::with_capacity(rows.len());
        for (t, v) in rows {
            let data = v[..2 * d * d].chunks(2).map(|c| C64::new(c[0], c[1])).collect();
            let m = ComplexMatrix::new(d, d, data).map_err(|e| QsdError::Parse(e.to_string()))?;
            match validate_density(m, &state_tol) {
                Ok(s) => states.push(s),
                Err(e) => {
                    invalid.push(format!("traj {id} t={t}: {e}"));
                    continue 'traj;
                }
            }
            min_eigs.push(v[2 * d * d]);
            residuals.push(v[2 * d * d + 1]);
        }
        let lrows: Vec<LedgerRow> = lrows
            .iter()
            .map(|(_, v)| {
                let col = |i: usize, j: usize| v[4 * i + j];
                let k = orders.len();
                LedgerRow {
                    trace_moments: (0..k).map(|i| col(i, 0)).collect(),
                    martingale: (0..k).map(|i| col(i, 1)).collect(),
                    increasing: (0..k).map(|i| col(i, 2)).collect(),
                    drift_integrands: (0..k).map(|i| col(i, 3)).collect(),
                }
            })
            .collect();
        let ledger = DoobMeyerLedger::from_rows(&orders, lrows)
            .map_err(|e| QsdError::Parse(format!("{}: traj {id}: {e}", ledger.path.display())))?;
        let spectrum = SpectrumTrace::from_rows(times.clone(), srows.iter().map(|r| r.1.clone()).collect())
            .map_err(|e| QsdError::Parse(format!("{}: traj {id}: {e}", spectrum.path.display())))?;
        let pair = cfg.mode == Mode::PurificationCheck;
        let diagnostics = RunDiagnostics {
            steps: cfg.params.n_steps(),
            min_eigenvalue: min_eigs.iter().copied().fold(f64::INFINITY, f64::min),
            max_purification_deviation: if pair { residuals.iter().copied().fold(0.0, f64::max) } else { 0.0 },
            ..RunDiagnostics::default()
        };
        ids.push(id);
        records.push(TrajectoryRecord {
            times,
            states,
            min_eigenvalues: min_eigs,
            ledger,
            spectrum,
            purification_deviations: if pair { residuals } else { Vec::new() },
            diagnostics,
        });
    }

    let missing: Vec<u64> = (0..cfg.n_traj).filter(|i| !all_ids.contains(i)).collect();
    let mut checks = vec![
        Check {
            name: "grid_integrity".into(),
            status: Status::of(mismatched.is_empty()),
            detail: if mismatched.is_empty() {
                format!("{} trajectories on the {}-point record grid", all_ids.len(), grid.len())
            } else {
                format!("grid mismatch in trajectories {mismatched:?}")
            },
        },
        Check {
            name: "states_valid".into(),
            status: Status::of(invalid.is_empty()),
            detail: invalid.first().cloned().unwrap_or_else(|| "all recorded states pass validation".into()),
        },
    ];
    if !missing.is_empty() {
        checks.push(Check {
            name: "trajectories_present".into(),
            status: Status::Fail,
            detail: format!("{} of {} trajectories missing", missing.len(), cfg.n_traj),
        });
    }
    let report = analyze(&cfg, &ids, &records, Vec::new(), false, checks);
    write_json(&dir.join(SUMMARY_JSON), &report)?;
    Ok(report)
}
