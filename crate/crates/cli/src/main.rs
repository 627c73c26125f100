use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sbv_core::harness::{self, SimConfig};
use sbv_core::{Execution, SimError};

const SEED_ENV: &str = "SBV_SIM_SEED";

#[derive(Parser)]
#[command(
    name = "sbv-sim",
    version,
    about = "Sub-band vectoring vs shared non-vectored rate sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment named in `[experiment] kind` and write its CSV table.
    Run {
        #[command(flatten)]
        common: Common,
        /// Validate the config and print the resolved settings without computing.
        #[arg(long)]
        dry_run: bool,
    },
    /// Dump the band plan of the base scenario as CSV.
    Plan {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fairness sweep of the configured plan over the distance grid.
    Fairness {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    config: PathBuf,
    /// Output path; defaults to `[experiment] output`, then stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides SBV_SIM_SEED and the config file.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<SimConfig, SimError> {
        let seed = match self.seed {
            Some(s) => Some(s),
            None => env_seed()?,
        };
        SimConfig::from_file(&self.config)?.with_overrides(seed, self.trials, self.out.clone())
    }
}

fn env_seed() -> Result<Option<u64>, SimError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| SimError::Config {
            key: Some(SEED_ENV.to_string()),
            message: format!("expected an unsigned integer, got `{v}`"),
        }),
        Err(_) => Ok(None),
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), SimError> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(path, text)?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), SimError> {
    match cli.command {
        Command::Run { common, dry_run } => {
            let config = common.load()?;
            if dry_run {
                println!("{}", config.resolved_text());
                println!("config_hash = {}", config.config_hash());
                return Ok(());
            }
            let table = harness::run(&config, Execution::default())?;
            emit(&table.to_csv(), config.experiment.output.as_deref())
        }
        Command::Plan { config, out } => {
            let config = SimConfig::from_file(&config)?;
            emit(&harness::plan_csv(&config)?, out.as_deref())
        }
        Command::Fairness { common } => {
            let config = common.load()?;
            let summary = harness::run_fairness(&config, Execution::default())?;
            let r = &summary.report;
            eprintln!(
                "policy={} max_delta={:.4} delta0={} {}",
                r.policy.name(),
                r.max_delta,
                r.delta0,
                if r.passed { "PASS" } else { "FAIL" }
            );
            match summary.selected_slot_width_hz {
                Some(b) => eprintln!("largest passing slot width: {b} Hz"),
                None => eprintln!("no candidate slot width passes"),
            }
            emit(&summary.to_csv(), config.experiment.output.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
