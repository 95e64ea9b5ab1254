//! Behaviour descriptors (hand-coded, SDBC, SPIRIT) and the environment
//! descriptor used as the archive key by QED.

mod environment;
mod hbd;
mod sdbc;
mod spirit;

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

pub use environment::{decode, env_descriptor, EnvDescriptor, ENV_CELLS};
pub use hbd::{combine_hbd, compute_hbd, HbdTrial, HBD_CELL};
pub use sdbc::{
    combine_sdbc, compute_sdbc, distance_sum, geometric_median, DescriptorError, SdbcTrial,
    MEDIAN_MAX_ITERATIONS, MEDIAN_TOLERANCE, SDBC_DIM, SDBC_FEATURES,
};
pub use spirit::{
    action_of, compute_spirit, state_of, SpiritCounts, SPIRIT_ACTIONS, SPIRIT_DIM, SPIRIT_STATES,
    WHEEL_BINS,
};

use crate::sim::{CycleView, RobotBody, TrialObserver};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BehaviourKind {
    Hbd,
    Sdbc,
    Spirit,
}

impl BehaviourKind {
    pub const ALL: [BehaviourKind; 3] = [
        BehaviourKind::Hbd,
        BehaviourKind::Sdbc,
        BehaviourKind::Spirit,
    ];

    pub fn dimension(self) -> usize {
        match self {
            BehaviourKind::Hbd => 3,
            BehaviourKind::Sdbc => SDBC_DIM,
            BehaviourKind::Spirit => SPIRIT_DIM,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BehaviourKind::Hbd => "hbd",
            BehaviourKind::Sdbc => "sdbc",
            BehaviourKind::Spirit => "spirit",
        }
    }
}

impl fmt::Display for BehaviourKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BehaviourKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BehaviourKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown descriptor `{s}`"))
    }
}

#[derive(Debug, Clone)]
enum Current {
    Idle,
    Hbd(HbdTrial),
    Sdbc(SdbcTrial),
    Spirit,
}

/// Accumulates one behaviour descriptor over several trials, which may be
/// run in different arenas. Call [`Recorder::begin_trial`] before streaming
/// each trial and [`Recorder::end_trial`] after it.
#[derive(Debug, Clone)]
pub struct Recorder {
    kind: BehaviourKind,
    current: Current,
    hbd: Vec<[f64; 3]>,
    sdbc: Vec<[f64; SDBC_DIM]>,
    spirit: SpiritCounts,
}

impl Recorder {
    pub fn new(kind: BehaviourKind) -> Self {
        Recorder {
            kind,
            current: Current::Idle,
            hbd: Vec::new(),
            sdbc: Vec::new(),
            spirit: SpiritCounts::new(1.0),
        }
    }

    pub fn kind(&self) -> BehaviourKind {
        self.kind
    }

    pub fn begin_trial(&mut self, side: f64, body: &RobotBody) {
        self.current = match self.kind {
            BehaviourKind::Hbd => Current::Hbd(HbdTrial::new(side)),
            BehaviourKind::Sdbc => Current::Sdbc(SdbcTrial::new(
                side,
                body.max_linear_speed,
                body.max_angular_speed,
            )),
            BehaviourKind::Spirit => {
                self.spirit.set_speed(body.max_linear_speed);
                Current::Spirit
            }
        };
    }

    pub fn end_trial(&mut self) -> Result<(), DescriptorError> {
        match std::mem::replace(&mut self.current, Current::Idle) {
            Current::Hbd(t) => self.hbd.push(t.features()),
            Current::Sdbc(t) => self.sdbc.push(t.features()?),
            Current::Spirit | Current::Idle => {}
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<Vec<f64>, DescriptorError> {
        match self.kind {
            BehaviourKind::Hbd => {
                if self.hbd.is_empty() {
                    return Err(DescriptorError::NoTrials);
                }
                Ok(combine_hbd(&self.hbd).to_vec())
            }
            BehaviourKind::Sdbc => combine_sdbc(&self.sdbc).map(|d| d.to_vec()),
            BehaviourKind::Spirit => Ok(self.spirit.descriptor()),
        }
    }
}

impl TrialObserver for Recorder {
    fn observe(&mut self, c: &CycleView<'_>) {
        match &mut self.current {
            Current::Idle => {}
            Current::Hbd(t) => t.observe(c),
            Current::Sdbc(t) => t.observe(c),
            Current::Spirit => self.spirit.observe(c),
        }
    }
}

/// One CSV row: `kind,dimension,v1,...,vd`.
pub fn write_descriptor_row<W: Write>(out: &mut W, kind: &str, values: &[f64]) -> io::Result<()> {
    write!(out, "{kind},{}", values.len())?;
    for v in values {
        write!(out, ",{v}")?;
    }
    writeln!(out)
}

/// Parses a row written by [`write_descriptor_row`].
pub fn parse_descriptor_row(line: &str) -> Option<(String, Vec<f64>)> {
    let mut parts = line.trim_end().split(',');
    let kind = parts.next()?.to_string();
    let dim: usize = parts.next()?.parse().ok()?;
    let values = parts
        .map(|v| v.parse().ok())
        .collect::<Option<Vec<f64>>>()?;
    (values.len() == dim).then_some((kind, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvironmentSpec;
    use crate::genome::random_genome;
    use crate::seed::rng_for;
    use crate::sim::{run_trial_cycles, simulate, FaultAssignment};

    #[test]
    fn recorder_matches_log_based_computation() {
        let env = EnvironmentSpec::NORMAL;
        let g = random_genome(&mut rng_for(9, &[]));
        let faults = FaultAssignment::none(10);
        let logs: Vec<_> = [1u64, 2, 3]
            .iter()
            .map(|&s| run_trial_cycles(&env, &g, &faults, s, 150).unwrap())
            .collect();
        for kind in BehaviourKind::ALL {
            let mut r = Recorder::new(kind);
            for &s in &[1u64, 2, 3] {
                let body = RobotBody::for_environment(&env);
                r.begin_trial(env.arena_side(), &body);
                simulate(&env, &g, &faults, s, 150, &mut r).unwrap();
                r.end_trial().unwrap();
            }
            let streamed = r.finish().unwrap();
            let direct = match kind {
                BehaviourKind::Hbd => compute_hbd(&logs).to_vec(),
                BehaviourKind::Sdbc => compute_sdbc(&logs).unwrap().to_vec(),
                BehaviourKind::Spirit => compute_spirit(&logs),
            };
            assert_eq!(streamed, direct, "{kind}");
            assert_eq!(streamed.len(), kind.dimension());
        }
    }

    #[test]
    fn csv_row_round_trip() {
        let v = vec![0.1, 1.0 / 3.0, 0.0, 1e-300];
        let mut buf = Vec::new();
        write_descriptor_row(&mut buf, "sdbc", &v).unwrap();
        let line = String::from_utf8(buf).unwrap();
        assert!(line.starts_with("sdbc,4,"));
        assert_eq!(parse_descriptor_row(&line), Some(("sdbc".to_string(), v)));
    }
}
