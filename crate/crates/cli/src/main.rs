use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use memspike::{resolve_out_dir, run, Experiment, ExperimentConfig, RunError, OUT_DIR_ENV};
use memspike_core::io::{import_plain, save_recording, Encoding};

#[derive(Parser)]
#[command(name = "memspike", version, about = "Memristive spike sorting and texel-array experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Fixed-order triplets of averaged spikes.
    Repeatability(RunArgs),
    /// Shuffled triplets of random spike instances.
    Randomized(RunArgs),
    /// Texel-array template matching.
    Texel(RunArgs),
    /// Charge per texel evaluation in inverter toggles.
    Charge(RunArgs),
    /// Converts a plain sample file plus timestamp file into a recording.
    Convert {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        timestamps: PathBuf,
        /// Sample period (s).
        #[arg(long, default_value_t = memspike_core::signal::DEFAULT_DT)]
        dt: f64,
        #[arg(long)]
        out: PathBuf,
        /// Write the body as little-endian f64 instead of CSV.
        #[arg(long)]
        binary: bool,
    },
}

fn run_verb(experiment: Experiment, args: RunArgs) -> Result<(), RunError> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = Some(s);
    }
    let env = std::env::var(OUT_DIR_ENV).ok();
    let out = resolve_out_dir(args.out.as_deref(), env.as_deref(), &cfg)?;
    let report = run(experiment, &cfg, &out)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    println!("{}: wrote {} files to {}", experiment.name(), report.artifacts.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Repeatability(a) => run_verb(Experiment::Repeatability, a),
        Command::Randomized(a) => run_verb(Experiment::Randomized, a),
        Command::Texel(a) => run_verb(Experiment::Texel, a),
        Command::Charge(a) => run_verb(Experiment::Charge, a),
        Command::Convert {
            samples,
            timestamps,
            dt,
            out,
            binary,
        } => import_plain(&samples, &timestamps, dt)
            .map_err(|e| RunError::Config(e.to_string()))
            .and_then(|rec| {
                let enc = if binary { Encoding::F64le } else { Encoding::Csv };
                save_recording(&rec, &out, enc).map_err(|e| RunError::Output(e.to_string()))
            }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
