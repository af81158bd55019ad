//! Named scenarios. Each returns a complete config; a config file or CLI
//! flags may override any field.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::config::{ConfigFile, InitialStateJson, Mode, ModelJson};
use crate::error::QsdError;
use crate::format::{MatrixJson, VectorJson};

pub const PRESETS: [&str; 4] = [
    "dephasing-qubit",
    "amplitude-damping-qubit",
    "two-channel-qutrit",
    "purification-bell",
];

fn real(rows: &[&[f64]]) -> MatrixJson {
    MatrixJson {
        dim: [rows.len(), rows.first().map_or(0, |r| r.len())],
        entries: rows.iter().flat_map(|r| r.iter().map(|&x| [x, 0.0])).collect(),
    }
}

fn sigma_z() -> MatrixJson {
    real(&[&[1.0, 0.0], &[0.0, -1.0]])
}

fn zero(d: usize) -> MatrixJson {
    MatrixJson::real_diagonal(&vec![0.0; d])
}

fn base(seed: u64) -> ConfigFile {
    ConfigFile {
        dt: Some(1e-3),
        seed: Some(seed),
        orders: Some(vec![2, 3]),
        ..Default::default()
    }
}

pub fn preset(name: &str) -> Result<ConfigFile, QsdError> {
    let cfg = match name {
        "dephasing-qubit" => ConfigFile {
            model: Some(ModelJson {
                hamiltonian: zero(2),
                couplings: vec![sigma_z()],
            }),
            initial_state: Some(InitialStateJson::Density {
                matrix: MatrixJson::real_diagonal(&[0.7, 0.3]),
            }),
            mode: Some(Mode::Mixed),
            t_max: Some(5.0),
            record_stride: Some(100),
            n_traj: Some(100),
            orders: Some(vec![2, 3, 4]),
            ..base(1)
        },
        // σ− = |0⟩⟨1| from the excited state |1⟩. The mixed equation is not
        // positivity-preserving under Euler–Maruyama from a pure state, so
        // this preset integrates the purification.
        "amplitude-damping-qubit" => ConfigFile {
            model: Some(ModelJson {
                hamiltonian: zero(2),
                couplings: vec![real(&[&[0.0, 1.0], &[0.0, 0.0]])],
            }),
            initial_state: Some(InitialStateJson::Density {
                matrix: MatrixJson::real_diagonal(&[0.0, 1.0]),
            }),
            mode: Some(Mode::Pure),
            t_max: Some(3.0),
            record_stride: Some(100),
            n_traj: Some(500),
            ..base(2)
        },
        "two-channel-qutrit" => ConfigFile {
            model: Some(ModelJson {
                hamiltonian: real(&[
                    &[0.0, FRAC_1_SQRT_2, 0.0],
                    &[FRAC_1_SQRT_2, 0.0, FRAC_1_SQRT_2],
                    &[0.0, FRAC_1_SQRT_2, 0.0],
                ]),
                couplings: vec![
                    real(&[&[0.0, 0.5, 0.0], &[0.0, 0.0, 0.5], &[0.0, 0.0, 0.0]]),
                    MatrixJson::real_diagonal(&[0.3, 0.0, -0.3]),
                ],
            }),
            initial_state: Some(InitialStateJson::Density {
                matrix: MatrixJson::real_diagonal(&[0.5, 0.3, 0.2]),
            }),
            mode: Some(Mode::Pure),
            t_max: Some(2.0),
            record_stride: Some(100),
            n_traj: Some(200),
            ..base(3)
        },
        "purification-bell" => ConfigFile {
            model: Some(ModelJson {
                hamiltonian: zero(2),
                couplings: vec![sigma_z()],
            }),
            initial_state: Some(InitialStateJson::Pure {
                psi: VectorJson {
                    dim: 4,
                    entries: vec![[FRAC_1_SQRT_2, 0.0], [0.0, 0.0], [0.0, 0.0], [FRAC_1_SQRT_2, 0.0]],
                },
                d_sys: 2,
                d_env: 2,
            }),
            mode: Some(Mode::PurificationCheck),
            t_max: Some(1.0),
            record_stride: Some(50),
            n_traj: Some(100),
            ..base(4)
        },
        other => {
            return Err(QsdError::Config(format!(
                "unknown preset {other:?}; available presets: {}",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(cfg)
}
