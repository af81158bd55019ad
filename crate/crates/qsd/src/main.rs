use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qsd::config::{ConfigFile, RunConfig};
use qsd::presets::PRESETS;
use qsd::QsdError;

/// Mixed-state quantum state diffusion ensembles.
#[derive(Parser)]
#[command(name = "qsd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an ensemble and write CSVs plus report.json.
    Run {
        /// JSON config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Start from a named preset (file fields and flags override it).
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n_traj: Option<u64>,
        /// Output directory.
        #[arg(long, env = "QSD_OUT_DIR")]
        out: Option<PathBuf>,
        /// Worker threads (default: available cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Write each trajectory's raw increments under increments/.
        #[arg(long)]
        dump_increments: bool,
    },
    /// Rebuild the report from a run directory and write summary.json.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// List the available presets.
    Presets,
}

fn run(command: Command) -> Result<(), QsdError> {
    match command {
        Command::Run {
            config,
            preset,
            seed,
            n_traj,
            out,
            workers,
            dump_increments,
        } => {
            if config.is_none() && preset.is_none() {
                return Err(QsdError::Config("give --config, --preset or both".into()));
            }
            let file = match &config {
                Some(path) => ConfigFile::load(path)?,
                None => ConfigFile::default(),
            };
            let flags = ConfigFile {
                seed,
                n_traj,
                out_dir: out,
                workers,
                dump_increments: dump_increments.then_some(true),
                ..Default::default()
            };
            let cfg = RunConfig::resolve(file.with_preset(preset.as_deref())?.overlay(flags))?;
            let result = qsd::run(&cfg);
            println!("wrote {}", cfg.out_dir.display());
            let report = result?;
            print!("{}", report.table());
            Ok(())
        }
        Command::Report { input } => {
            let report = qsd::output::report_dir(&input)?;
            print!("{}", report.table());
            Ok(())
        }
        Command::Presets => {
            for name in PRESETS {
                println!("{name}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
