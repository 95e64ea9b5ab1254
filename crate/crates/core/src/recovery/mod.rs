//! Combined-fault sampling, archive-based recovery and the analysis of its
//! outcome.

mod projection;
pub mod stats;

use std::collections::BTreeMap;
use std::io::{self, Write};

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

pub use projection::{
    mean_pairwise_distance, project_archive, spirit_distance, ProjectedElite, ProjectedMap,
};

use crate::descriptors::BehaviourKind;
use crate::env::EnvironmentSpec;
use crate::qd::{Archive, EvalError, SwarmEvaluator};
use crate::seed::{derive, label};
use crate::sim::{FaultAssignment, FaultType};
use crate::tasks::TaskKind;

/// Trials per re-evaluation during recovery.
pub const RECOVERY_TRIALS: usize = 10;

#[derive(Debug, Error)]
pub enum RecoveryError {
    #[error("archive is empty")]
    EmptyArchive,
    #[error("normal-environment performance is 0; proportional change is undefined")]
    ZeroNormal,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Independent uniform fault per robot.
pub fn sample_combined_fault<R: Rng + ?Sized>(rng: &mut R, robots: usize) -> FaultAssignment {
    FaultAssignment(
        (0..robots)
            .map(|_| FaultType::ALL[rng.random_range(0..FaultType::ALL.len())])
            .collect(),
    )
}

/// Trial seeds shared by the normal reference and every fault of one
/// recovery study, so that differences come from the faults alone.
pub fn recovery_seeds(master: u64, replicate: u64, trials: usize) -> Vec<u64> {
    (0..trials)
        .map(|t| derive(master, &[label("recovery-trials"), replicate, t as u64]))
        .collect()
}

/// How elites are re-evaluated during recovery.
#[derive(Debug, Clone)]
pub struct RecoverySetup {
    pub task: TaskKind,
    pub seeds: Vec<u64>,
    pub cycles: usize,
}

impl RecoverySetup {
    pub fn new(task: TaskKind, seeds: Vec<u64>) -> Self {
        RecoverySetup {
            task,
            seeds,
            cycles: crate::sim::cycles_for(crate::sim::TRIAL_SECONDS),
        }
    }
}

/// Performance (and optional descriptor) of one elite.
#[derive(Debug, Clone, PartialEq)]
pub struct ElitePerformance {
    pub key: usize,
    pub performance: f64,
    pub descriptor: Vec<f64>,
}

/// Re-evaluates every elite in the normal environment under `faults`, in
/// key order.
pub fn evaluate_archive(
    archive: &Archive,
    setup: &RecoverySetup,
    faults: &FaultAssignment,
    behaviour: Option<BehaviourKind>,
) -> Result<Vec<ElitePerformance>, RecoveryError> {
    if archive.is_empty() {
        return Err(RecoveryError::EmptyArchive);
    }
    let evaluator = SwarmEvaluator {
        task: setup.task,
        behaviour,
        trials: setup.seeds.len(),
        cycles: setup.cycles,
    };
    let env = EnvironmentSpec::NORMAL;
    let elites: Vec<(usize, &crate::qd::Elite)> = archive.iter().collect();
    elites
        .par_iter()
        .map(|&(key, e)| {
            let ev = evaluator.evaluate_with(&e.genome, &env, faults, &setup.seeds)?;
            Ok(ElitePerformance {
                key,
                performance: ev.performance,
                descriptor: ev.descriptor,
            })
        })
        .collect()
}

/// Highest performer; the lowest key wins ties.
pub fn argmax(perfs: &[ElitePerformance]) -> Option<&ElitePerformance> {
    let mut best: Option<&ElitePerformance> = None;
    for p in perfs {
        if best.is_none_or(|b| {
            p.performance > b.performance || (p.performance == b.performance && p.key < b.key)
        }) {
            best = Some(p);
        }
    }
    best
}

/// Normal-environment re-evaluation of the whole archive with SPIRIT
/// descriptors of every elite.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalReference {
    pub best_key: usize,
    pub best_performance: f64,
    pub elites: Vec<ElitePerformance>,
}

impl NormalReference {
    pub fn compute(archive: &Archive, setup: &RecoverySetup) -> Result<Self, RecoveryError> {
        let elites = evaluate_archive(
            archive,
            setup,
            &FaultAssignment::none(EnvironmentSpec::NORMAL.robots),
            Some(BehaviourKind::Spirit),
        )?;
        Self::from_elites(elites)
    }

    pub fn from_elites(elites: Vec<ElitePerformance>) -> Result<Self, RecoveryError> {
        let best = argmax(&elites).ok_or(RecoveryError::EmptyArchive)?;
        Ok(NormalReference {
            best_key: best.key,
            best_performance: best.performance,
            elites,
        })
    }

    pub fn descriptor(&self, key: usize) -> Option<&[f64]> {
        self.elites
            .iter()
            .find(|e| e.key == key)
            .map(|e| e.descriptor.as_slice())
    }
}

/// Best elite under the fault, with its mean performance.
pub fn recover(
    archive: &Archive,
    setup: &RecoverySetup,
    faults: &FaultAssignment,
) -> Result<(usize, f64), RecoveryError> {
    let perfs = evaluate_archive(archive, setup, faults, None)?;
    let best = argmax(&perfs).ok_or(RecoveryError::EmptyArchive)?;
    Ok((best.key, best.performance))
}

/// Proportional change `(faulty - normal) / normal`.
pub fn proportional_change(normal: f64, faulty: f64) -> Result<f64, RecoveryError> {
    if normal == 0.0 {
        return Err(RecoveryError::ZeroNormal);
    }
    Ok((faulty - normal) / normal)
}

/// Change in performance of the normal-best elite once the fault is applied.
pub fn impact(normal_best: f64, transferred: f64) -> Result<f64, RecoveryError> {
    proportional_change(normal_best, transferred)
}

/// Change between the archive's best under the fault and its best in the
/// normal environment.
pub fn resilience(normal_max: f64, faulty_max: f64) -> Result<f64, RecoveryError> {
    proportional_change(normal_max, faulty_max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryRecord {
    pub task: TaskKind,
    pub fault_id: usize,
    pub faults: FaultAssignment,
    pub normal_best_performance: f64,
    pub transferred_performance: f64,
    pub impact: f64,
    pub recovered_performance: f64,
    pub resilience: f64,
    /// SPIRIT distance between the recovering and the normal-best elite,
    /// both described in the normal environment.
    pub distance: f64,
    pub best_cell_key: usize,
}

/// Full recovery analysis of one combined fault.
pub fn analyse_fault(
    archive: &Archive,
    setup: &RecoverySetup,
    reference: &NormalReference,
    fault_id: usize,
    faults: &FaultAssignment,
) -> Result<RecoveryRecord, RecoveryError> {
    let perfs = evaluate_archive(archive, setup, faults, None)?;
    let by_key: BTreeMap<usize, f64> = perfs.iter().map(|p| (p.key, p.performance)).collect();
    let transferred = by_key[&reference.best_key];
    let best = argmax(&perfs).ok_or(RecoveryError::EmptyArchive)?;
    let distance = match (
        reference.descriptor(reference.best_key),
        reference.descriptor(best.key),
    ) {
        (Some(a), Some(b)) if !a.is_empty() && a.len() == b.len() => spirit_distance(a, b),
        _ => 0.0,
    };
    Ok(RecoveryRecord {
        task: setup.task,
        fault_id,
        faults: faults.clone(),
        normal_best_performance: reference.best_performance,
        transferred_performance: transferred,
        impact: impact(reference.best_performance, transferred)?,
        recovered_performance: best.performance,
        resilience: resilience(reference.best_performance, best.performance)?,
        distance,
        best_cell_key: best.key,
    })
}

pub const RECORD_HEADER: &str = "task,fault_id,faults,normal_best_perf,transferred_perf,impact,recovered_perf,resilience,distance,best_cell_key";

pub fn write_records<W: Write>(mut out: W, records: &[RecoveryRecord]) -> io::Result<()> {
    writeln!(out, "{RECORD_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.task,
            r.fault_id,
            r.faults.codes(),
            r.normal_best_performance,
            r.transferred_performance,
            r.impact,
            r.recovered_performance,
            r.resilience,
            r.distance,
            r.best_cell_key
        )?;
    }
    Ok(())
}

/// Parses records written by [`write_records`], skipping `#` lines.
pub fn read_records(text: &str) -> Result<Vec<RecoveryRecord>, String> {
    let mut out = Vec::new();
    let mut header = false;
    for (n, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !header {
            if line != RECORD_HEADER {
                return Err(format!("line {}: unexpected header", n + 1));
            }
            header = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(format!("line {}: expected 10 fields", n + 1));
        }
        let num = |i: usize| {
            f[i].parse::<f64>()
                .map_err(|e| format!("line {}: field {}: {e}", n + 1, i + 1))
        };
        let int = |i: usize| {
            f[i].parse::<usize>()
                .map_err(|e| format!("line {}: field {}: {e}", n + 1, i + 1))
        };
        out.push(RecoveryRecord {
            task: f[0].parse().map_err(|e| format!("line {}: {e}", n + 1))?,
            fault_id: int(1)?,
            faults: FaultAssignment::parse_codes(f[2])
                .map_err(|e| format!("line {}: {e}", n + 1))?,
            normal_best_performance: num(3)?,
            transferred_performance: num(4)?,
            impact: num(5)?,
            recovered_performance: num(6)?,
            resilience: num(7)?,
            distance: num(8)?,
            best_cell_key: int(9)?,
        });
    }
    Ok(out)
}

/// Numeric column of a [`RecoveryRecord`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordField {
    Impact,
    Resilience,
    RecoveredPerformance,
    Distance,
}

impl RecordField {
    pub fn get(self, r: &RecoveryRecord) -> f64 {
        match self {
            RecordField::Impact => r.impact,
            RecordField::Resilience => r.resilience,
            RecordField::RecoveredPerformance => r.recovered_performance,
            RecordField::Distance => r.distance,
        }
    }
}

/// Records whose impact drops performance by more than half are left out of
/// signatures.
pub const SIGNATURE_IMPACT_FLOOR: f64 = -0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Signature {
    pub fit: stats::LinearFit,
    pub kde: stats::KdeGrid,
    pub points: usize,
}

pub fn signature(
    records: &[RecoveryRecord],
    x: RecordField,
    y: RecordField,
) -> Result<Signature, stats::StatsError> {
    let kept: Vec<&RecoveryRecord> = records
        .iter()
        .filter(|r| r.impact >= SIGNATURE_IMPACT_FLOOR)
        .collect();
    let xs: Vec<f64> = kept.iter().map(|r| x.get(r)).collect();
    let ys: Vec<f64> = kept.iter().map(|r| y.get(r)).collect();
    Ok(Signature {
        fit: stats::linear_fit(&xs, &ys)?,
        kde: stats::kde_2d(&xs, &ys)?,
        points: kept.len(),
    })
}
