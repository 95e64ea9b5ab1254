//! Command-line pipeline around the `swarm-qed` library: evolve archives,
//! re-evaluate them, inject faults, analyse recovery and export data.

pub mod commands;
pub mod config;
pub mod error;
pub mod provenance;

use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::{Run, CONFIG_FILE};
use crate::config::{ExperimentConfig, Preset};
use crate::error::{CliError, ErrorKind, Result};

#[derive(Debug, Parser)]
#[command(
    name = "swarm-qed",
    version,
    about = "Quality-diversity swarm evolution and fault-recovery experiments"
)]
pub struct Cli {
    /// TOML file overriding the preset.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run directory (analysis output directory for `analyze`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub preset: Option<Preset>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evolve one archive per replicate.
    Evolve,
    /// Re-score every elite in the normal environment.
    Reevaluate,
    /// Inject sampled combined faults and record recovery.
    Faults,
    /// Compare fault records of one or more runs.
    Analyze {
        /// Run directories with a completed `faults` stage.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
    /// Export descriptors and a trial log of the best elite.
    Export,
}

impl Cli {
    fn overrides_config(&self) -> bool {
        self.config.is_some() || self.seed.is_some() || self.preset.is_some()
    }

    fn resolve(&self) -> Result<ExperimentConfig> {
        let text = match &self.config {
            Some(p) => Some(fs::read_to_string(p).map_err(|e| CliError::io(p, e))?),
            None => None,
        };
        ExperimentConfig::resolve(self.preset.unwrap_or_default(), text.as_deref(), self.seed)
    }

    /// Binds the run directory. Stages after `evolve` reuse the recorded
    /// config unless config flags are given, which must then agree with it.
    pub fn open_run(&self) -> Result<Run> {
        let fresh = matches!(self.command, Command::Evolve) || self.overrides_config();
        let config = if fresh { Some(self.resolve()?) } else { None };
        let out = self
            .out
            .clone()
            .or_else(|| {
                config
                    .as_ref()
                    .and_then(|c| c.experiment.output.clone())
                    .map(PathBuf::from)
            })
            .ok_or_else(|| CliError::new(ErrorKind::Config, "no output directory; pass --out"))?;
        match config {
            Some(c) => Run::open(&out, c),
            None if out.join(CONFIG_FILE).exists() => Run::load(&out),
            None => Run::open(&out, self.resolve()?),
        }
    }
}

/// Runs one subcommand.
pub fn execute(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match &cli.command {
        Command::Analyze { runs } => {
            let out = cli
                .out
                .clone()
                .ok_or_else(|| CliError::new(ErrorKind::Config, "analyze needs --out"))?;
            commands::analyze(runs, &out)
        }
        Command::Evolve => commands::evolve(&cli.open_run()?),
        Command::Reevaluate => commands::reevaluate(&cli.open_run()?),
        Command::Faults => commands::faults(&cli.open_run()?),
        Command::Export => commands::export(&cli.open_run()?),
    }
}
