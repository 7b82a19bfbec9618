use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gaah::cli::{preset_names, reproduce, run, Experiment, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "gaah", version, about = "Exact simulation of the GAAH hard-core boson chain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: available cores).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Participation-entropy order(s).
    #[arg(long, value_delimiter = ',')]
    q: Option<Vec<f64>>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides { seed: self.seed, workers: self.workers, out: self.out.clone(), q: self.q.clone() }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Eigenstate-averaged -ln IPR over a (mu, V) grid.
    PhaseMap(Common),
    /// Site occupancies after a quench.
    Quench(Common),
    /// Participation entropies after a quench.
    PeSeries(Common),
    /// Late-time entropies along a path in the (mu, V) plane.
    PathSweep(Common),
    /// Open-system quench with relaxation and dephasing.
    Lindblad(Common),
    /// Fits of late-time entropy against ln of the sector dimension.
    ScalingFit(Common),
    /// Coupler frequencies realising the hopping profile.
    DeviceMap(Common),
    /// Run a named preset.
    Reproduce {
        preset: String,
        #[command(flatten)]
        common: Common,
    },
}

fn run_one(kind: Experiment, c: &Common) -> gaah::Result<Vec<PathBuf>> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.experiment = kind;
    c.overrides().apply(&mut cfg);
    Ok(run(&cfg)?.files)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::PhaseMap(c) => run_one(Experiment::PhaseMap, c),
        Command::Quench(c) => run_one(Experiment::Quench, c),
        Command::PeSeries(c) => run_one(Experiment::PeSeries, c),
        Command::PathSweep(c) => run_one(Experiment::PathSweep, c),
        Command::Lindblad(c) => run_one(Experiment::Lindblad, c),
        Command::ScalingFit(c) => run_one(Experiment::ScalingFit, c),
        Command::DeviceMap(c) => run_one(Experiment::DeviceMap, c),
        Command::Reproduce { preset, common } => {
            if common.config.is_some() {
                eprintln!("error: reproduce takes no --config (presets: {})", preset_names().join(", "));
                return ExitCode::from(2);
            }
            reproduce(preset, &common.overrides()).map(|r| r.files)
        }
    };
    match result {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
