//! Run configuration: the JSON file format, preset merging and validation.

use std::path::{Path, PathBuf};

use qsd_core::linalg::{partial_trace_pure, purify, validate_density, DensityMatrix, Tolerances};
use qsd_core::trajectory::{ModelOperators, RunParams};
use qsd_core::C64;
use serde::{Deserialize, Serialize};

use crate::error::QsdError;
use crate::format::{MatrixJson, VectorJson};
use crate::presets;

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_T_MAX: f64 = 10.0;
pub const DEFAULT_RECORD_STRIDE: usize = 10;
pub const DEFAULT_ORDERS: [u32; 3] = [2, 3, 4];
pub const DEFAULT_OUT_DIR: &str = "qsd-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Mixed-state equation on `S`.
    Mixed,
    /// Pure-state equation on `S ⊗ S'`; the reduced state is recorded.
    Pure,
    /// Both on the same noise; the mixed route is recorded and compared.
    PurificationCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelJson {
    pub hamiltonian: MatrixJson,
    pub couplings: Vec<MatrixJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialStateJson {
    Density { matrix: MatrixJson },
    Pure { psi: VectorJson, d_sys: usize, d_env: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancesJson {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub herm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eig: Option<f64>,
    /// Hard floor on the minimum eigenvalue during a run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psd_hard: Option<f64>,
    /// `false` disables the positivity abort (the minimum is still recorded).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psd_abort: Option<bool>,
}

impl TolerancesJson {
    fn overlay(self, over: Self) -> Self {
        Self {
            herm: over.herm.or(self.herm),
            trace: over.trace.or(self.trace),
            psd: over.psd.or(self.psd),
            eig: over.eig.or(self.eig),
            psd_hard: over.psd_hard.or(self.psd_hard),
            psd_abort: over.psd_abort.or(self.psd_abort),
        }
    }

    pub fn resolve(&self) -> Tolerances {
        let d = Tolerances::default();
        let mut t = Tolerances {
            herm: self.herm.unwrap_or(d.herm),
            trace: self.trace.unwrap_or(d.trace),
            psd: self.psd.unwrap_or(d.psd),
            eig: self.eig.unwrap_or(d.eig),
            psd_hard: self.psd_hard.unwrap_or(d.psd_hard),
        };
        if self.psd_abort == Some(false) {
            t.psd_hard = f64::NEG_INFINITY;
        }
        t
    }
}

/// The config file. Every field is optional so that a file can refine a
/// preset; after merging, the required fields must all be present.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<InitialStateJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_stride: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_traj: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub orders: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<TolerancesJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dump_increments: Option<bool>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, QsdError> {
        let text = std::fs::read_to_string(path).map_err(|e| QsdError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| QsdError::Config(format!("{}: {e}", path.display())))
    }

    /// Fields set in `over` replace those in `self`.
    pub fn overlay(self, over: Self) -> Self {
        let tolerances = match (self.tolerances, over.tolerances) {
            (Some(a), Some(b)) => Some(a.overlay(b)),
            (a, b) => b.or(a),
        };
        Self {
            preset: over.preset.or(self.preset),
            model: over.model.or(self.model),
            initial_state: over.initial_state.or(self.initial_state),
            mode: over.mode.or(self.mode),
            dt: over.dt.or(self.dt),
            t_max: over.t_max.or(self.t_max),
            record_stride: over.record_stride.or(self.record_stride),
            n_traj: over.n_traj.or(self.n_traj),
            seed: over.seed.or(self.seed),
            orders: over.orders.or(self.orders),
            tolerances,
            out_dir: over.out_dir.or(self.out_dir),
            workers: over.workers.or(self.workers),
            dump_increments: over.dump_increments.or(self.dump_increments),
        }
    }

    /// Applies the named preset (from `preset_override` or the file's own
    /// `preset` field) underneath the file's fields.
    pub fn with_preset(self, preset_override: Option<&str>) -> Result<Self, QsdError> {
        let name = preset_override.map(str::to_owned).or_else(|| self.preset.clone());
        match name {
            Some(name) => {
                let mut base = presets::preset(&name)?;
                base.preset = Some(name);
                let mut file = self;
                file.preset = None;
                Ok(base.overlay(file))
            }
            None => Ok(self),
        }
    }
}

/// What each trajectory starts from, after reconciling state and mode.
#[derive(Debug, Clone, PartialEq)]
pub enum Start {
    Mixed(DensityMatrix),
    Pure { psi: Vec<C64>, env_dim: usize },
    Pair { psi: Vec<C64>, env_dim: usize },
}

/// A fully validated run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// The merged file, echoed to `config.json` (minus `out_dir`, `workers`).
    pub file: ConfigFile,
    pub ops: ModelOperators,
    pub mode: Mode,
    pub start: Start,
    /// `ρ0` on the system.
    pub rho0: DensityMatrix,
    pub params: RunParams,
    pub n_traj: u64,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub workers: usize,
    pub dump_increments: bool,
}

fn need<T>(v: Option<T>, name: &str) -> Result<T, QsdError> {
    v.ok_or_else(|| QsdError::Config(format!("missing field `{name}`")))
}

impl RunConfig {
    pub fn resolve(file: ConfigFile) -> Result<Self, QsdError> {
        let tolerances = file.tolerances.clone().unwrap_or_default().resolve();
        let model = need(file.model.clone(), "model")?;
        let ops = ModelOperators::new(
            model.hamiltonian.to_matrix()?,
            model.couplings.iter().map(MatrixJson::to_matrix).collect::<Result<_, _>>()?,
            &tolerances,
        )
        .map_err(|e| QsdError::Validation(format!("model: {e}")))?;
        let mode = need(file.mode, "mode")?;
        let dt = file.dt.unwrap_or(DEFAULT_DT);
        let t_max = file.t_max.unwrap_or(DEFAULT_T_MAX);
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(QsdError::Config(format!("`dt` must be positive and finite, got {dt}")));
        }
        if !(t_max >= dt && t_max.is_finite()) {
            return Err(QsdError::Config(format!("`t_max` must be finite and at least dt, got {t_max}")));
        }
        let n_traj = need(file.n_traj, "n_traj")?;
        if n_traj == 0 {
            return Err(QsdError::Config("`n_traj` must be at least 1".into()));
        }
        let orders = file.orders.clone().unwrap_or_else(|| DEFAULT_ORDERS.to_vec());
        if let Some(m) = orders.iter().find(|&&m| m < 2) {
            return Err(QsdError::Config(format!("`orders` must all be >= 2, got {m}")));
        }
        let record_stride = file.record_stride.unwrap_or(DEFAULT_RECORD_STRIDE);
        if record_stride == 0 {
            return Err(QsdError::Config("`record_stride` must be at least 1".into()));
        }
        let workers = file
            .workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, usize::from));
        if workers == 0 {
            return Err(QsdError::Config("`workers` must be at least 1".into()));
        }

        let d = ops.dim();
        let state = need(file.initial_state.clone(), "initial_state")?;
        let invalid = |e: qsd_core::LinalgError| QsdError::Validation(format!("initial state: {e}"));
        let (rho0, pure) = match &state {
            InitialStateJson::Density { matrix } => {
                let rho = validate_density(matrix.to_matrix()?, &tolerances).map_err(invalid)?;
                if rho.dim() != d {
                    return Err(QsdError::Validation(format!(
                        "initial state has dimension {} but the model has {d}",
                        rho.dim()
                    )));
                }
                (rho, None)
            }
            InitialStateJson::Pure { psi, d_sys, d_env } => {
                if *d_sys != d {
                    return Err(QsdError::Validation(format!(
                        "initial state has d_sys = {d_sys} but the model has dimension {d}"
                    )));
                }
                let psi = psi.to_vector()?;
                let rho = partial_trace_pure(&psi, *d_sys, *d_env).map_err(invalid)?;
                (rho, Some((psi, *d_env)))
            }
        };
        let purified = || -> Result<(Vec<C64>, usize), QsdError> {
            match &pure {
                Some(p) => Ok(p.clone()),
                None => purify(&rho0, &tolerances).map_err(invalid),
            }
        };
        let start = match mode {
            Mode::Mixed => Start::Mixed(rho0.clone()),
            Mode::Pure => {
                let (psi, env_dim) = purified()?;
                Start::Pure { psi, env_dim }
            }
            Mode::PurificationCheck => {
                let (psi, env_dim) = purified()?;
                Start::Pair { psi, env_dim }
            }
        };
        let params = RunParams {
            dt,
            t_max,
            record_stride,
            orders: orders.clone(),
            tolerances,
        };
        let mut echoed = file.clone();
        echoed.dt = Some(dt);
        echoed.t_max = Some(t_max);
        echoed.orders = Some(orders);
        echoed.record_stride = Some(record_stride);
        echoed.seed = Some(file.seed.unwrap_or(0));
        echoed.dump_increments = Some(file.dump_increments.unwrap_or(false));
        Ok(Self {
            ops,
            mode,
            start,
            rho0,
            params,
            n_traj,
            seed: file.seed.unwrap_or(0),
            out_dir: file.out_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
            workers,
            dump_increments: file.dump_increments.unwrap_or(false),
            file: echoed,
        })
    }

    /// The config as written next to the outputs: everything that affects
    /// results, nothing that does not (output directory, worker count).
    pub fn echo(&self) -> ConfigFile {
        ConfigFile {
            out_dir: None,
            workers: None,
            ..self.file.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_fields_override_preset() {
        let file = ConfigFile {
            preset: Some("dephasing-qubit".into()),
            dt: Some(0.01),
            tolerances: Some(TolerancesJson {
                psd_abort: Some(false),
                ..Default::default()
            }),
            ..Default::default()
        };
        let merged = file.with_preset(None).unwrap();
        assert_eq!(merged.dt, Some(0.01));
        assert!(merged.model.is_some());
        let cfg = RunConfig::resolve(merged).unwrap();
        assert_eq!(cfg.params.tolerances.psd_hard, f64::NEG_INFINITY);
        assert_eq!(cfg.mode, Mode::Mixed);
    }

    #[test]
    fn unknown_preset_lists_choices() {
        let err = ConfigFile::default().with_preset(Some("nope")).unwrap_err().to_string();
        assert!(err.contains("dephasing-qubit"), "{err}");
    }

    #[test]
    fn rejects_bad_values() {
        let base = presets::preset("dephasing-qubit").unwrap();
        let bad_dt = ConfigFile { dt: Some(0.0), ..base.clone() };
        assert_eq!(RunConfig::resolve(bad_dt).unwrap_err().exit_code(), 2);
        let bad_order = ConfigFile { orders: Some(vec![1]), ..base.clone() };
        assert!(RunConfig::resolve(bad_order).is_err());
        let bad_state = ConfigFile {
            initial_state: Some(InitialStateJson::Density {
                matrix: MatrixJson::real_diagonal(&[1.2, -0.2]),
            }),
            ..base.clone()
        };
        let err = RunConfig::resolve(bad_state).unwrap_err();
        assert!(matches!(err, QsdError::Validation(_)));
        let short = ConfigFile { t_max: Some(1e-4), ..base };
        assert!(RunConfig::resolve(short).is_err());
    }

    #[test]
    fn pure_mode_purifies_density_input() {
        let mut file = presets::preset("dephasing-qubit").unwrap();
        file.mode = Some(Mode::Pure);
        let cfg = RunConfig::resolve(file).unwrap();
        match cfg.start {
            Start::Pure { psi, env_dim } => {
                assert_eq!(env_dim, 2);
                assert_eq!(psi.len(), 4);
            }
            other => panic!("{other:?}"),
        }
    }
}
