use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use cran_core::experiment::{run_experiment, write_csv, write_metadata, ExperimentConfig, Scenario, Sweep, SweepAxis};

#[derive(Parser)]
#[command(name = "cran-sim", version, about = "Monte-Carlo experiments for cloud radio access backhaul compression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one configuration point (any sweep in the config is ignored).
    Run(Common),
    /// Evaluate the configuration across one swept axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Axis to vary; defaults to the sweep stored in the config.
        #[arg(long)]
        axis: Option<String>,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// Run the built-in invariant checks.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Print the preset configuration of a scenario as JSON.
    Preset {
        #[arg(long)]
        scenario: String,
    },
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long, conflicts_with = "scenario")]
    config: Option<PathBuf>,
    /// Preset scenario to run when no config file is given.
    #[arg(long)]
    scenario: Option<String>,
    /// Output directory for `<scenario>.csv` and `<scenario>.meta.json`;
    /// the table goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of drops.
    #[arg(long)]
    drops: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.scenario) {
            (Some(path), _) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                ExperimentConfig::from_json(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            (None, Some(name)) => ExperimentConfig::preset(name.parse::<Scenario>()?),
            (None, None) => bail!("either --config or --scenario is required"),
        };
        if let Some(seed) = self.seed {
            cfg.base_seed = seed;
        }
        if let Some(drops) = self.drops {
            cfg.n_drops = drops;
        }
        Ok(cfg)
    }
}

fn emit(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<()> {
    cfg.validate()?;
    let rows = run_experiment(cfg)?;
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let name = cfg.scenario.name();
            let csv_path = dir.join(format!("{name}.csv"));
            write_csv(fs::File::create(&csv_path)?, &rows)?;
            write_metadata(&dir.join(format!("{name}.meta.json")), cfg)?;
            eprintln!("wrote {}", csv_path.display());
        }
        None => write_csv(io::stdout().lock(), &rows)?,
    }
    Ok(())
}

fn run() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run(common) => {
            let mut cfg = common.load()?;
            cfg.sweep = None;
            emit(&cfg, common.out.as_deref())?;
        }
        Command::Sweep { common, axis, values } => {
            let mut cfg = common.load()?;
            match (axis, values) {
                (Some(axis), Some(values)) => {
                    cfg.sweep = Some(Sweep {
                        axis: axis.parse::<SweepAxis>()?,
                        values,
                    })
                }
                (None, None) if cfg.sweep.is_some() => {}
                (None, None) => bail!("the config has no sweep; pass --axis and --values"),
                _ => bail!("--axis and --values must be given together"),
            }
            emit(&cfg, common.out.as_deref())?;
        }
        Command::Selftest { seed } => {
            let checks = cran_core::selftest::run_all(seed);
            let mut stdout = io::stdout().lock();
            let mut failed = 0;
            for c in &checks {
                let tag = if c.passed { "PASS" } else { "FAIL" };
                writeln!(stdout, "{tag} {} ({})", c.name, c.detail)?;
                failed += usize::from(!c.passed);
            }
            writeln!(stdout, "{} of {} checks passed", checks.len() - failed, checks.len())?;
            if failed > 0 {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Preset { scenario } => {
            println!("{}", ExperimentConfig::preset(scenario.parse()?).to_json()?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
