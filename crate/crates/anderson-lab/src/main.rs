//! Command-line experiment runner.
//!
//! One subcommand per experiment; each accepts an optional TOML config plus
//! overrides for the common knobs. Exit codes: 0 success, 2 config error,
//! 3 numerical failure budget exceeded.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use anderson_lab::ensemble::{run_experiment, ExperimentConfig, ExperimentKind, RunError};
use anderson_lab::model::ModelParams;

#[derive(Parser)]
#[command(
    name = "anderson-lab",
    about = "Monte Carlo spectral experiments on the 1D Anderson chain",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Realization count override.
    #[arg(long)]
    realizations: Option<usize>,
    /// Box size |Λ| override.
    #[arg(long)]
    size: Option<usize>,
    /// Report destination; stdout when omitted and not set in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = hardware default).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Full spectra and the pooled eigenvalue histogram.
    Spectrum(CommonArgs),
    /// Transfer-matrix γ(E), optionally cross-checked via the Thouless formula.
    Lyapunov(CommonArgs),
    /// Density of states from pooled spectra.
    Dos(CommonArgs),
    /// Small paired-gradient probabilities against the reference floor.
    GradientFloor(CommonArgs),
    /// Interval occupancy versus the Wegner and Minami bounds.
    LevelStats(CommonArgs),
    /// Sign changes of the paired gradient under the ε_j⁺ sweep.
    SignScan(CommonArgs),
    /// Trimmed inverse fractional moments ⟨|f|⁻ˢ⟩_δ across box sizes.
    Moments(CommonArgs),
    /// Eigenfunction decay floors and onset distances.
    Decay(CommonArgs),
    /// Self-overlap derivative decay and the β subordination check.
    Renorm(CommonArgs),
}

impl Command {
    fn kind(&self) -> ExperimentKind {
        match self {
            Command::Spectrum(_) => ExperimentKind::Spectrum,
            Command::Lyapunov(_) => ExperimentKind::Lyapunov,
            Command::Dos(_) => ExperimentKind::Dos,
            Command::GradientFloor(_) => ExperimentKind::GradientFloor,
            Command::LevelStats(_) => ExperimentKind::LevelStats,
            Command::SignScan(_) => ExperimentKind::SignScan,
            Command::Moments(_) => ExperimentKind::Moments,
            Command::Decay(_) => ExperimentKind::Decay,
            Command::Renorm(_) => ExperimentKind::Renorm,
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::Spectrum(a)
            | Command::Lyapunov(a)
            | Command::Dos(a)
            | Command::GradientFloor(a)
            | Command::LevelStats(a)
            | Command::SignScan(a)
            | Command::Moments(a)
            | Command::Decay(a)
            | Command::Renorm(a) => a,
        }
    }
}

fn build_config(command: &Command) -> Result<ExperimentConfig, RunError> {
    let args = command.args();
    let mut config = match &args.config {
        Some(path) => {
            let loaded = ExperimentConfig::load(path)?;
            if loaded.experiment != command.kind() {
                return Err(RunError::Config(format!(
                    "config is for '{}', but the '{}' subcommand was invoked",
                    loaded.experiment.name(),
                    command.kind().name()
                )));
            }
            loaded
        }
        None => ExperimentConfig::defaults(command.kind()),
    };

    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if let Some(m) = args.realizations {
        config.realizations = m;
    }
    if let Some(size) = args.size {
        let delta = config.model.disorder_half_width();
        config.model = ModelParams::new(size, delta).map_err(|e| RunError::Config(e.to_string()))?;
    }
    if let Some(out) = &args.out {
        config.output_path = Some(out.clone());
    }
    if let Some(threads) = args.threads {
        config.threads = threads;
    }
    config.validate()?;
    Ok(config)
}

fn run(command: &Command) -> Result<(), RunError> {
    let config = build_config(command)?;
    let to_stdout = config.output_path.is_none();
    let report = run_experiment(&config)?;
    if to_stdout {
        println!(
            "{}",
            serde_json::to_string_pretty(&report).expect("report serialization")
        );
    } else {
        eprintln!(
            "{}: {} realizations, {} excluded, {} ms -> {}",
            config.experiment.name(),
            report.exclusions.realizations,
            report.exclusions.excluded_total(),
            report.runtime.wall_ms,
            config.output_path.as_ref().unwrap().display()
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
