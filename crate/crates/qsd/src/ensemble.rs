//! Parallel ensemble orchestration and the raw increment dump.

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use qsd_core::noise::{substream, ComplexIncrementBlock, IncrementSource, NoiseError, ReplaySource};
use qsd_core::trajectory::{run_purification_pair, run_trajectory, InitialState, TrajectoryError};
use qsd_core::{TrajectoryRecord, C64};
use rayon::prelude::*;

use crate::config::{RunConfig, Start};
use crate::error::QsdError;

const DUMP_MAGIC: &[u8; 8] = b"QSDINC1\0";

/// Wraps a source and keeps a copy of every block it hands out.
pub struct Recording<S> {
    inner: S,
    dt: f64,
    blocks: Vec<Vec<C64>>,
}

impl<S: IncrementSource> Recording<S> {
    pub fn new(inner: S) -> Self {
        Self {
            inner,
            dt: 0.0,
            blocks: Vec::new(),
        }
    }

    pub fn blocks(&self) -> &[Vec<C64>] {
        &self.blocks
    }

    /// Writes the dump: magic, `u64` channels, `u64` blocks, `f64` dt, then
    /// `[re, im]` per value, all little-endian.
    pub fn write_to(&self, path: &Path) -> Result<(), QsdError> {
        let io = |e| QsdError::io(path, e);
        let mut w = BufWriter::new(std::fs::File::create(path).map_err(io)?);
        let channels = self.blocks.first().map_or(0, Vec::len) as u64;
        w.write_all(DUMP_MAGIC).map_err(io)?;
        w.write_all(&channels.to_le_bytes()).map_err(io)?;
        w.write_all(&(self.blocks.len() as u64).to_le_bytes()).map_err(io)?;
        w.write_all(&self.dt.to_le_bytes()).map_err(io)?;
        for z in self.blocks.iter().flatten() {
            w.write_all(&z.re.to_le_bytes()).map_err(io)?;
            w.write_all(&z.im.to_le_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

impl<S: IncrementSource> IncrementSource for Recording<S> {
    fn next_block(&mut self, n: usize, dt: f64) -> Result<ComplexIncrementBlock, NoiseError> {
        let block = self.inner.next_block(n, dt)?;
        self.dt = dt;
        self.blocks.push(block.values.clone());
        Ok(block)
    }
}

/// Reads a dump written by [`Recording::write_to`]; returns the step size
/// and a source that replays it.
pub fn read_increments(path: &Path) -> Result<(f64, ReplaySource), QsdError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| QsdError::io(path, e))?;
    let bad = |what: &str| QsdError::Parse(format!("{}: {what}", path.display()));
    if bytes.len() < 32 || &bytes[..8] != DUMP_MAGIC {
        return Err(bad("not an increment dump"));
    }
    let word = |i: usize| -> [u8; 8] { bytes[i..i + 8].try_into().expect("8-byte slice") };
    let channels = u64::from_le_bytes(word(8)) as usize;
    let n_blocks = u64::from_le_bytes(word(16)) as usize;
    let dt = f64::from_le_bytes(word(24));
    if bytes.len() != 32 + 16 * channels * n_blocks {
        return Err(bad("length does not match header"));
    }
    let values: Vec<C64> = bytes[32..]
        .chunks_exact(16)
        .map(|c| {
            C64::new(
                f64::from_le_bytes(c[..8].try_into().expect("8-byte slice")),
                f64::from_le_bytes(c[8..].try_into().expect("8-byte slice")),
            )
        })
        .collect();
    let blocks = if channels == 0 {
        vec![Vec::new(); n_blocks]
    } else {
        values.chunks(channels).map(<[C64]>::to_vec).collect()
    };
    Ok((dt, ReplaySource::new(blocks)))
}

/// Integrates one trajectory of the run from `source`.
pub fn run_one<S: IncrementSource + ?Sized>(
    cfg: &RunConfig,
    source: &mut S,
) -> Result<TrajectoryRecord, TrajectoryError> {
    match &cfg.start {
        Start::Mixed(rho) => run_trajectory(&InitialState::Mixed(rho.clone()), &cfg.ops, &cfg.params, source),
        Start::Pure { psi, env_dim } => run_trajectory(
            &InitialState::Pure {
                psi: psi.clone(),
                env_dim: *env_dim,
            },
            &cfg.ops,
            &cfg.params,
            source,
        ),
        Start::Pair { psi, env_dim } => run_purification_pair(psi, *env_dim, &cfg.ops, &cfg.params, source),
    }
}

/// Outcome of one trajectory, with its recorded increments when dumping.
pub struct TrajectoryOutcome {
    pub id: u64,
    pub result: Result<TrajectoryRecord, TrajectoryError>,
    pub increments: Option<Recording<qsd_core::NoiseStream>>,
}

/// Runs trajectories `0..n_traj` on a pool of `cfg.workers` threads.
/// Trajectory `i` draws from `substream(seed, i)`; results come back in id
/// order whatever the scheduling.
pub fn run_ensemble(cfg: &RunConfig) -> Result<Vec<TrajectoryOutcome>, QsdError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| QsdError::Config(format!("cannot start {} workers: {e}", cfg.workers)))?;
    let outcomes = pool.install(|| {
        (0..cfg.n_traj)
            .into_par_iter()
            .map(|id| {
                let stream = substream(cfg.seed, id);
                if cfg.dump_increments {
                    let mut rec = Recording::new(stream);
                    let result = run_one(cfg, &mut rec);
                    TrajectoryOutcome {
                        id,
                        result,
                        increments: Some(rec),
                    }
                } else {
                    let mut stream = stream;
                    TrajectoryOutcome {
                        id,
                        result: run_one(cfg, &mut stream),
                        increments: None,
                    }
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ConfigFile;
    use crate::presets::preset;

    fn small(workers: usize) -> RunConfig {
        let file = ConfigFile {
            n_traj: Some(6),
            t_max: Some(0.05),
            record_stride: Some(10),
            workers: Some(workers),
            ..preset("dephasing-qubit").unwrap()
        };
        RunConfig::resolve(file).unwrap()
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let a = run_ensemble(&small(1)).unwrap();
        let b = run_ensemble(&small(4)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.id, y.id);
            assert_eq!(x.result.as_ref().unwrap(), y.result.as_ref().unwrap());
        }
    }

    #[test]
    fn dump_replays_to_the_same_trajectory() {
        let mut cfg = small(2);
        cfg.dump_increments = true;
        let out = run_ensemble(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj_3.bin");
        out[3].increments.as_ref().unwrap().write_to(&path).unwrap();
        let (dt, mut replay) = read_increments(&path).unwrap();
        assert_eq!(dt, cfg.params.dt);
        let again = run_one(&cfg, &mut replay).unwrap();
        assert_eq!(&again, out[3].result.as_ref().unwrap());
    }
}
