//! Ensemble runner, file formats and command-line front end for mixed-state
//! quantum state diffusion, built on `qsd-core`.

pub mod analysis;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod format;
pub mod output;
pub mod presets;

pub use config::{ConfigFile, Mode, RunConfig};
pub use error::QsdError;

/// Runs a resolved config and writes its output directory. A numerical
/// abort in any trajectory is returned as an error after the outputs (and
/// the report listing the abort) have been written.
pub fn run(cfg: &RunConfig) -> Result<analysis::Report, QsdError> {
    let outcomes = ensemble::run_ensemble(cfg)?;
    if let Some(e) = outcomes
        .iter()
        .find_map(|o| o.result.as_ref().err().filter(|e| !e.is_numerical()))
    {
        return Err(QsdError::Validation(e.to_string()));
    }
    let report = output::write_run(cfg, outcomes)?;
    match report.aborted.first() {
        Some(a) => Err(QsdError::Numerical {
            trajectory: a.traj_id,
            message: a.message.clone(),
        }),
        None => Ok(report),
    }
}
