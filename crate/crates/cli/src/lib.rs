//! Experiment runner for the memspike simulator: config loading, the four
//! experiments and their artifacts.

pub mod charge;
pub mod config;
pub mod output;
pub mod plot;
pub mod sorting;
pub mod texel_run;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{Experiment, ExperimentConfig};
pub use output::RunReport;

/// Environment variable that overrides the configured output directory.
pub const OUT_DIR_ENV: &str = "MEMSPIKE_OUT_DIR";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("simulation error: {0}")]
    Simulation(#[from] memspike_core::Error),
    #[error("output error: {0}")]
    Output(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Simulation(_) | RunError::Output(_) => 3,
        }
    }
}

/// Output directory: the command-line value wins, then the environment,
/// then the config file.
pub fn resolve_out_dir(
    cli: Option<&Path>,
    env: Option<&str>,
    cfg: &ExperimentConfig,
) -> Result<PathBuf, RunError> {
    cli.map(Path::to_path_buf)
        .or_else(|| env.filter(|s| !s.is_empty()).map(PathBuf::from))
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| RunError::Config(format!("no output directory (use --out, {OUT_DIR_ENV} or `output_dir`)")))
}

/// Validates the config, runs one experiment and writes its artifacts.
pub fn run(experiment: Experiment, cfg: &ExperimentConfig, out: &Path) -> Result<RunReport, RunError> {
    let seed = cfg.validate(experiment)?;
    match experiment {
        Experiment::Repeatability | Experiment::Randomized => {
            let r = sorting::run_sorter(cfg, experiment, seed)?;
            output::write_sorter(out, experiment, seed, cfg, &r)
        }
        Experiment::Texel => {
            let r = texel_run::run_texel(cfg, seed)?;
            output::write_texel(out, seed, cfg, &r)
        }
        Experiment::Charge => {
            let r = charge::run_charge(&cfg.charge)?;
            output::write_charge(out, seed, cfg, &r)
        }
    }
}
