//! Experiment configuration: a built-in preset deep-merged with an optional
//! TOML file. Unknown keys anywhere are rejected.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use swarm_qed::descriptors::BehaviourKind;
use swarm_qed::genome::MutationParams;
use swarm_qed::qd::{Mode, ARCHIVE_CELLS};
use swarm_qed::tasks::TaskKind;
use toml::Value;

use crate::error::{CliError, ErrorKind};

pub const DESK_PRESET: &str = r#"
[experiment]
task = "aggregation"
algorithm = "qed"
seed = 1
replicates = 1

[evolution]
initial_population = 200
generations = 200
batch_size = 20
trials = 5
trial_seconds = 400.0

[mutation]
node_add = 0.10
node_delete = 0.10
connection_add = 0.15
connection_delete = 0.15
connection_modify = 0.15
weight = 0.05
eta = 15.0

[cvt]
centroids = 4096
sdbc_seeds = 20000
spirit_seeds = 8192
max_iterations = 10
tolerance = 1e-6

[recovery]
faults = 10
trials = 10
project = false
"#;

pub const PAPER_PRESET: &str = r#"
[experiment]
task = "aggregation"
algorithm = "qed"
seed = 1
replicates = 5

[evolution]
initial_population = 2000
generations = 30000
batch_size = 80
trials = 50
trial_seconds = 400.0

[mutation]
node_add = 0.10
node_delete = 0.10
connection_add = 0.15
connection_delete = 0.15
connection_modify = 0.15
weight = 0.05
eta = 15.0

[cvt]
centroids = 4096
sdbc_seeds = 100000
spirit_seeds = 1000000
max_iterations = 100
tolerance = 1e-6

[recovery]
faults = 50
trials = 10
project = true
"#;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Preset {
    #[default]
    Desk,
    Paper,
}

impl Preset {
    pub fn text(self) -> &'static str {
        match self {
            Preset::Desk => DESK_PRESET,
            Preset::Paper => PAPER_PRESET,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Hbd,
    Sdbc,
    Spirit,
    Qed,
}

impl Algorithm {
    pub fn mode(self) -> Mode {
        match self {
            Algorithm::Hbd => Mode::Behaviour(BehaviourKind::Hbd),
            Algorithm::Sdbc => Mode::Behaviour(BehaviourKind::Sdbc),
            Algorithm::Spirit => Mode::Behaviour(BehaviourKind::Spirit),
            Algorithm::Qed => Mode::Qed,
        }
    }

    /// Dimensionality of the space the archive is keyed by.
    pub fn dimension(self) -> usize {
        match self.mode() {
            Mode::Behaviour(b) => b.dimension(),
            Mode::Qed => swarm_qed::env::ATTRIBUTES,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Hbd => "hbd",
            Algorithm::Sdbc => "sdbc",
            Algorithm::Spirit => "spirit",
            Algorithm::Qed => "qed",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub task: String,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub replicates: usize,
    /// Output directory; `--out` takes precedence. Not part of the hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionSection {
    pub initial_population: usize,
    pub generations: usize,
    pub batch_size: usize,
    pub trials: usize,
    pub trial_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MutationSection {
    pub node_add: f64,
    pub node_delete: f64,
    pub connection_add: f64,
    pub connection_delete: f64,
    pub connection_modify: f64,
    pub weight: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvtSection {
    pub centroids: usize,
    pub sdbc_seeds: usize,
    pub spirit_seeds: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverySection {
    /// Combined faults sampled per replicate map.
    pub faults: usize,
    pub trials: usize,
    /// Project re-evaluated maps onto a shared SPIRIT tessellation.
    pub project: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub evolution: EvolutionSection,
    pub mutation: MutationSection,
    pub cvt: CvtSection,
    pub recovery: RecoverySection,
}

fn config_error(message: impl Into<String>) -> CliError {
    CliError::new(ErrorKind::Config, message)
}

/// Recursively overlays `over` onto `base`; non-table values replace.
pub fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Table(b), Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl ExperimentConfig {
    /// Preset, then `file` overrides, then the seed override.
    pub fn resolve(
        preset: Preset,
        file: Option<&str>,
        seed: Option<u64>,
    ) -> Result<Self, CliError> {
        let mut value: Value = preset
            .text()
            .parse()
            .map_err(|e| config_error(format!("preset: {e}")))?;
        if let Some(text) = file {
            let over: Value = text.parse().map_err(|e| config_error(format!("{e}")))?;
            merge(&mut value, over);
        }
        let mut config: ExperimentConfig =
            value.try_into().map_err(|e| config_error(format!("{e}")))?;
        if let Some(s) = seed {
            config.experiment.seed = s;
        }
        config.validate()?;
        Ok(config)
    }

    /// Parses a fully resolved config, as written next to run outputs.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| config_error(format!("{e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.task()?;
        let e = &self.evolution;
        if e.initial_population == 0 || e.batch_size == 0 || e.trials == 0 {
            return Err(config_error(
                "evolution.initial_population, batch_size and trials must be positive",
            ));
        }
        if e.trial_seconds.is_nan() || e.trial_seconds <= 0.0 {
            return Err(config_error("evolution.trial_seconds must be positive"));
        }
        if self.experiment.replicates == 0 {
            return Err(config_error("experiment.replicates must be positive"));
        }
        if !self.mutation().is_valid() {
            return Err(config_error("mutation probabilities must lie in [0, 1]"));
        }
        if self.mutation.eta.is_nan() || self.mutation.eta < 0.0 {
            return Err(config_error("mutation.eta must be non-negative"));
        }
        let c = &self.cvt;
        if c.centroids == 0 || c.centroids > ARCHIVE_CELLS {
            return Err(config_error(format!(
                "cvt.centroids must lie in 1..={ARCHIVE_CELLS}"
            )));
        }
        if c.sdbc_seeds < c.centroids || c.spirit_seeds < c.centroids {
            return Err(config_error(
                "cvt seed counts must be at least cvt.centroids",
            ));
        }
        if self.recovery.trials == 0 {
            return Err(config_error("recovery.trials must be positive"));
        }
        Ok(())
    }

    pub fn task(&self) -> Result<TaskKind, CliError> {
        TaskKind::from_str(&self.experiment.task)
            .map_err(|e| config_error(format!("experiment.task: {e}")))
    }

    pub fn mutation(&self) -> MutationParams {
        let m = &self.mutation;
        MutationParams {
            node_add: m.node_add,
            node_delete: m.node_delete,
            connection_add: m.connection_add,
            connection_delete: m.connection_delete,
            connection_modify: m.connection_modify,
            weight: m.weight,
            eta: m.eta,
        }
    }

    pub fn cycles(&self) -> usize {
        swarm_qed::sim::cycles_for(self.evolution.trial_seconds)
    }

    /// Canonical TOML without the output directory.
    pub fn canonical(&self) -> String {
        let mut c = self.clone();
        c.experiment.output = None;
        toml::to_string(&c).expect("config serialises")
    }

    /// Hex SHA-256 of [`ExperimentConfig::canonical`].
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}
