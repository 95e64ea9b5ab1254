//! Pipeline stages. Each stage writes into its own directory below the run
//! directory and seals it with a manifest; rerunning a sealed stage only
//! verifies it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use sha2::{Digest, Sha256};
use swarm_qed::descriptors::{
    parse_descriptor_row, write_descriptor_row, BehaviourKind, EnvDescriptor, SPIRIT_ACTIONS,
};
use swarm_qed::env::EnvironmentSpec;
use swarm_qed::qd::{
    self, generate_cvt_centroids, read_archive, write_archive, Archive, CellIndexer, Centroids,
    CvtParams, EvolutionConfig, EvolutionEvent, Mode, SwarmEvaluator,
};
use swarm_qed::recovery::stats::{compare, median, StatResult};
use swarm_qed::recovery::{
    analyse_fault, project_archive, read_records, recovery_seeds, sample_combined_fault, signature,
    write_records, ElitePerformance, NormalReference, ProjectedElite, RecordField, RecoveryError,
    RecoveryRecord, RecoverySetup,
};
use swarm_qed::seed::{derive, label, rng_for};
use swarm_qed::sim::{run_trial_cycles, FaultAssignment};
use swarm_qed::tasks::TaskKind;

use crate::config::{Algorithm, ExperimentConfig};
use crate::error::{CliError, ErrorKind, Result};
use crate::provenance::{
    begin_stage, require_stage, seal_stage, write_with_header, Provenance, StageStatus, MANIFEST,
};

pub const CONFIG_FILE: &str = "config.toml";
pub const EVOLVE_DIR: &str = "evolve";
pub const REEVALUATE_DIR: &str = "reevaluate";
pub const FAULTS_DIR: &str = "faults";
pub const EXPORT_DIR: &str = "export";
pub const ANALYSIS_DIR: &str = "analysis";
pub const CENTROIDS_FILE: &str = "centroids.csv";
pub const STATS_FILE: &str = "stats.csv";
pub const TRACE_FILE: &str = "cell_trace.csv";
pub const PERFORMANCE_FILE: &str = "performance.csv";
pub const SPIRIT_FILE: &str = "spirit.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const PROJECTION_FILE: &str = "projection.csv";
pub const SPIRIT_CENTROIDS_FILE: &str = "spirit_centroids.csv";
pub const RECORDS_FILE: &str = "records.csv";

pub const STATS_HEADER: &str = "generation,evaluations,coverage,best,mean,insertions,failures";
pub const TRACE_HEADER: &str = "generation,cell_key,performance,eval_id";

fn run_error(e: impl std::fmt::Display) -> CliError {
    CliError::new(ErrorKind::Run, e.to_string())
}

fn recovery_error(e: RecoveryError) -> CliError {
    match e {
        RecoveryError::EmptyArchive => CliError::new(ErrorKind::Empty, e.to_string()),
        other => run_error(other),
    }
}

pub fn rep_name(replicate: usize) -> String {
    format!("rep_{replicate:02}")
}

/// A run directory bound to its resolved configuration.
#[derive(Debug, Clone)]
pub struct Run {
    pub dir: PathBuf,
    pub config: ExperimentConfig,
    pub prov: Provenance,
}

impl Run {
    /// Binds `dir` to `config`, recording the config on first use and
    /// refusing a directory that holds a different one.
    pub fn open(dir: &Path, config: ExperimentConfig) -> Result<Run> {
        let prov = Provenance::new(config.hash(), config.experiment.seed);
        let path = dir.join(CONFIG_FILE);
        if path.exists() {
            let stored = Run::load(dir)?;
            if stored.prov != prov {
                return Err(CliError::new(
                    ErrorKind::Config,
                    format!(
                        "{} holds a run with {}, requested {}; use a fresh --out",
                        dir.display(),
                        stored.prov.line(),
                        prov.line()
                    ),
                ));
            }
        } else {
            write_with_header(&path, &prov, &config.canonical())?;
        }
        Ok(Run {
            dir: dir.to_path_buf(),
            config,
            prov,
        })
    }

    /// Reads the configuration recorded in `dir`.
    pub fn load(dir: &Path) -> Result<Run> {
        let path = dir.join(CONFIG_FILE);
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let config = ExperimentConfig::parse(&text)?;
        let prov = Provenance::new(config.hash(), config.experiment.seed);
        let recorded = Provenance::of_file(&path)?;
        if recorded != prov {
            return Err(CliError::new(
                ErrorKind::Integrity,
                format!("{}: header does not match its contents", path.display()),
            ));
        }
        Ok(Run {
            dir: dir.to_path_buf(),
            config,
            prov,
        })
    }

    pub fn stage(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn seed(&self) -> u64 {
        self.config.experiment.seed
    }

    pub fn replicate_seed(&self, replicate: usize) -> u64 {
        derive(self.seed(), &[label("replicate"), replicate as u64])
    }

    fn task(&self) -> Result<TaskKind> {
        self.config.task()
    }

    fn algorithm(&self) -> Algorithm {
        self.config.experiment.algorithm
    }

    fn replicates(&self) -> usize {
        self.config.experiment.replicates
    }

    /// Trial seeds shared by re-evaluation and fault analysis of one map.
    fn recovery_setup(&self, replicate: usize) -> Result<RecoverySetup> {
        Ok(RecoverySetup {
            task: self.task()?,
            seeds: recovery_seeds(self.seed(), replicate as u64, self.config.recovery.trials),
            cycles: self.config.cycles(),
        })
    }

    fn cvt_params(&self, kind: BehaviourKind) -> CvtParams {
        let c = &self.config.cvt;
        let (seeds, simplex_block) = match kind {
            BehaviourKind::Spirit => (c.spirit_seeds, Some(SPIRIT_ACTIONS)),
            _ => (c.sdbc_seeds, None),
        };
        CvtParams {
            k: c.centroids,
            dim: kind.dimension(),
            seeds,
            max_iterations: c.max_iterations,
            tolerance: c.tolerance,
            simplex_block,
        }
    }

    fn centroids(&self, kind: BehaviourKind) -> Result<Centroids> {
        info!("generating {} {kind} centroids", self.config.cvt.centroids);
        generate_cvt_centroids(
            &self.cvt_params(kind),
            derive(self.seed(), &[label("cvt"), kind.dimension() as u64]),
        )
        .map_err(run_error)
    }

    /// Indexer of the evolved archives, read back from the evolve stage.
    pub fn indexer(&self) -> Result<CellIndexer> {
        Ok(match self.algorithm().mode() {
            Mode::Qed => CellIndexer::Environment,
            Mode::Behaviour(BehaviourKind::Hbd) => CellIndexer::hbd(),
            Mode::Behaviour(_) => CellIndexer::Cvt(read_centroids(
                &self.stage(EVOLVE_DIR).join(CENTROIDS_FILE),
            )?),
        })
    }

    pub fn load_archive(&self, replicate: usize) -> Result<Archive> {
        let dir = self.stage(EVOLVE_DIR).join(rep_name(replicate));
        read_archive(&dir, self.indexer()?).map_err(|e| match e {
            qd::PersistError::Io(io) => CliError::io(&dir, io),
            other => CliError::new(ErrorKind::Integrity, format!("{}: {other}", dir.display())),
        })
    }
}

fn read_centroids(path: &Path) -> Result<Centroids> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    Centroids::read_csv(std::io::BufReader::new(file))
        .map_err(|e| CliError::new(ErrorKind::Integrity, format!("{}: {e}", path.display())))
}

fn write_centroids(path: &Path, prov: &Provenance, centroids: &Centroids) -> Result<()> {
    let mut body = Vec::new();
    centroids
        .write_csv(&mut body)
        .map_err(|e| CliError::io(path, e))?;
    write_with_header(path, prov, &String::from_utf8(body).expect("csv is utf-8"))
}

fn stage_done(dir: &Path, name: &str) {
    info!(
        "{name}: {} is complete and verified; nothing to do",
        dir.display()
    );
}

/// Evolves one archive per replicate; writes archive files, per-generation
/// statistics and the trace of every archive insertion.
pub fn evolve(run: &Run) -> Result<()> {
    let dir = run.stage(EVOLVE_DIR);
    if begin_stage(&dir, &run.prov)? == StageStatus::Complete {
        stage_done(&dir, "evolve");
        return Ok(());
    }
    let task = run.task()?;
    let mode = run.algorithm().mode();
    let behaviour = match mode {
        Mode::Behaviour(b) => Some(b),
        Mode::Qed => None,
    };
    let indexer = match behaviour {
        Some(kind @ (BehaviourKind::Sdbc | BehaviourKind::Spirit)) => {
            let centroids = run.centroids(kind)?;
            write_centroids(&dir.join(CENTROIDS_FILE), &run.prov, &centroids)?;
            CellIndexer::Cvt(centroids)
        }
        Some(BehaviourKind::Hbd) => CellIndexer::hbd(),
        None => CellIndexer::Environment,
    };
    let e = &run.config.evolution;
    let evaluator = SwarmEvaluator {
        task,
        behaviour,
        trials: e.trials,
        cycles: run.config.cycles(),
    };
    for r in 0..run.replicates() {
        let rep = dir.join(rep_name(r));
        let config = EvolutionConfig {
            mode,
            initial_population: e.initial_population,
            generations: e.generations,
            batch_size: e.batch_size,
            mutation: run.config.mutation(),
            seed: run.replicate_seed(r),
        };
        let mut stats = format!("{STATS_HEADER}\n");
        let mut trace = format!("{TRACE_HEADER}\n");
        let archive = qd::evolve(&config, indexer.clone(), &evaluator, |event| match event {
            EvolutionEvent::Inserted {
                generation,
                key,
                performance,
                eval_id,
            } => {
                let _ = writeln!(trace, "{generation},{key},{performance},{eval_id}");
            }
            EvolutionEvent::Generation(s) => {
                let _ = writeln!(
                    stats,
                    "{},{},{},{},{},{},{}",
                    s.generation,
                    s.evaluations,
                    s.coverage,
                    s.best,
                    s.mean,
                    s.insertions,
                    s.failures
                );
                info!(
                    "{} {task} rep {r}: generation {} coverage {} best {:.4} mean {:.4}",
                    run.algorithm(),
                    s.generation,
                    s.coverage,
                    s.best,
                    s.mean
                );
            }
        })
        .map_err(run_error)?;
        write_archive(&rep, &archive, &[run.prov.line()]).map_err(|e| match e {
            qd::PersistError::Io(io) => CliError::io(&rep, io),
            other => run_error(other),
        })?;
        write_with_header(&rep.join(STATS_FILE), &run.prov, &stats)?;
        write_with_header(&rep.join(TRACE_FILE), &run.prov, &trace)?;
    }
    seal_stage(&dir, &run.prov)
}

/// One row per replicate of the re-evaluation summary.
#[derive(Debug, Clone, PartialEq)]
pub struct MapSummary {
    pub replicate: usize,
    pub elites: usize,
    pub best_key: usize,
    pub best_performance: f64,
    pub mean_performance: f64,
}

pub const SUMMARY_HEADER: &str = "replicate,elites,best_cell_key,best_performance,mean_performance";

/// Re-scores every elite in the normal environment with the recovery trial
/// seeds and records its SPIRIT descriptor there.
pub fn reevaluate(run: &Run) -> Result<()> {
    require_stage(&run.stage(EVOLVE_DIR), &run.prov, "evolve")?;
    let dir = run.stage(REEVALUATE_DIR);
    if begin_stage(&dir, &run.prov)? == StageStatus::Complete {
        stage_done(&dir, "reevaluate");
        return Ok(());
    }
    let project = if run.config.recovery.project {
        let centroids = run.centroids(BehaviourKind::Spirit)?;
        write_centroids(&dir.join(SPIRIT_CENTROIDS_FILE), &run.prov, &centroids)?;
        Some(centroids)
    } else {
        None
    };
    let mut summary = format!("{SUMMARY_HEADER}\n");
    let mut projection = String::from("replicate,projected_coverage,diversity\n");
    for r in 0..run.replicates() {
        let archive = run.load_archive(r)?;
        info!("reevaluate rep {r}: {} elites", archive.len());
        let reference =
            NormalReference::compute(&archive, &run.recovery_setup(r)?).map_err(recovery_error)?;
        let rep = dir.join(rep_name(r));
        let mut perf = String::from("cell_key,performance\n");
        let mut spirit = Vec::new();
        writeln!(spirit, "cell_key,dim,values").expect("vec write");
        for e in &reference.elites {
            let _ = writeln!(perf, "{},{}", e.key, e.performance);
            write_descriptor_row(&mut spirit, &e.key.to_string(), &e.descriptor)
                .expect("vec write");
        }
        write_with_header(&rep.join(PERFORMANCE_FILE), &run.prov, &perf)?;
        write_with_header(
            &rep.join(SPIRIT_FILE),
            &run.prov,
            &String::from_utf8(spirit).expect("utf-8"),
        )?;
        let mean = reference.elites.iter().map(|e| e.performance).sum::<f64>()
            / reference.elites.len() as f64;
        let _ = writeln!(
            summary,
            "{r},{},{},{},{mean}",
            reference.elites.len(),
            reference.best_key,
            reference.best_performance
        );
        if let Some(centroids) = &project {
            let elites: Vec<ProjectedElite> = reference
                .elites
                .iter()
                .map(|e| ProjectedElite {
                    key: e.key,
                    performance: e.performance,
                    descriptor: e.descriptor.clone(),
                })
                .collect();
            let map = project_archive(&elites, centroids);
            let _ = writeln!(projection, "{r},{},{}", map.coverage(), map.diversity);
        }
    }
    write_with_header(&dir.join(SUMMARY_FILE), &run.prov, &summary)?;
    if project.is_some() {
        write_with_header(&dir.join(PROJECTION_FILE), &run.prov, &projection)?;
    }
    seal_stage(&dir, &run.prov)
}

/// Normal-environment reference of one map, read back from `reevaluate`.
pub fn load_reference(run: &Run, replicate: usize) -> Result<NormalReference> {
    let rep = run.stage(REEVALUATE_DIR).join(rep_name(replicate));
    let bad = |path: &Path, n: usize, what: &str| {
        CliError::new(
            ErrorKind::Integrity,
            format!("{}: line {}: {what}", path.display(), n + 1),
        )
    };
    let path = rep.join(PERFORMANCE_FILE);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let mut perf = Vec::new();
    for (n, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#'))
        .skip(1)
    {
        let (k, p) = line
            .split_once(',')
            .ok_or_else(|| bad(&path, n, "expected 2 fields"))?;
        let key: usize = k.parse().map_err(|_| bad(&path, n, "bad cell key"))?;
        let p: f64 = p.parse().map_err(|_| bad(&path, n, "bad performance"))?;
        perf.push((key, p));
    }
    let path = rep.join(SPIRIT_FILE);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let mut spirit = BTreeMap::new();
    for (n, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#'))
        .skip(1)
    {
        let (k, v) = parse_descriptor_row(line).ok_or_else(|| bad(&path, n, "malformed row"))?;
        spirit.insert(
            k.parse::<usize>()
                .map_err(|_| bad(&path, n, "bad cell key"))?,
            v,
        );
    }
    let elites = perf
        .into_iter()
        .map(|(key, performance)| ElitePerformance {
            key,
            performance,
            descriptor: spirit.remove(&key).unwrap_or_default(),
        })
        .collect();
    NormalReference::from_elites(elites).map_err(recovery_error)
}

/// `count` distinct combined faults, drawn from one stream so that a
/// map's faults do not depend on how many maps follow it.
pub fn sample_faults(master: u64, count: usize, robots: usize) -> Vec<FaultAssignment> {
    let mut rng = rng_for(master, &[label("fault-sampling")]);
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let f = sample_combined_fault(&mut rng, robots);
        if seen.insert(f.codes()) {
            out.push(f);
        }
    }
    out
}

/// Injects `recovery.faults` combined faults into each replicate map and
/// records impact, resilience and behavioural distance per fault.
pub fn faults(run: &Run) -> Result<()> {
    require_stage(&run.stage(REEVALUATE_DIR), &run.prov, "reevaluate")?;
    let dir = run.stage(FAULTS_DIR);
    if begin_stage(&dir, &run.prov)? == StageStatus::Complete {
        stage_done(&dir, "faults");
        return Ok(());
    }
    let per_map = run.config.recovery.faults;
    let all = sample_faults(
        run.seed(),
        per_map * run.replicates(),
        EnvironmentSpec::NORMAL.robots,
    );
    let mut records = Vec::with_capacity(all.len());
    for r in 0..run.replicates() {
        let archive = run.load_archive(r)?;
        let reference = load_reference(run, r)?;
        let setup = run.recovery_setup(r)?;
        for (j, f) in all[r * per_map..(r + 1) * per_map].iter().enumerate() {
            let id = r * per_map + j;
            let record =
                analyse_fault(&archive, &setup, &reference, id, f).map_err(recovery_error)?;
            info!(
                "fault {id} ({}): impact {:.3} resilience {:.3}",
                f.codes(),
                record.impact,
                record.resilience
            );
            records.push(record);
        }
    }
    let mut body = Vec::new();
    write_records(&mut body, &records).expect("vec write");
    write_with_header(
        &dir.join(RECORDS_FILE),
        &run.prov,
        &String::from_utf8(body).expect("utf-8"),
    )?;
    seal_stage(&dir, &run.prov)
}

/// Exports stored descriptors (environment descriptors for QED) and the
/// log of one normal-environment trial of the best elite, per replicate.
pub fn export(run: &Run) -> Result<()> {
    require_stage(&run.stage(EVOLVE_DIR), &run.prov, "evolve")?;
    let dir = run.stage(EXPORT_DIR);
    if begin_stage(&dir, &run.prov)? == StageStatus::Complete {
        stage_done(&dir, "export");
        return Ok(());
    }
    let has_reference = run.stage(REEVALUATE_DIR).join(MANIFEST).exists();
    if has_reference {
        require_stage(&run.stage(REEVALUATE_DIR), &run.prov, "reevaluate")?;
    }
    for r in 0..run.replicates() {
        let archive = run.load_archive(r)?;
        let mut desc = Vec::new();
        writeln!(desc, "cell_key,dim,values").expect("vec write");
        for (key, e) in archive.iter() {
            let values = match run.algorithm().mode() {
                Mode::Qed => EnvDescriptor::of(&e.environment)
                    .map(|d| d.as_vector())
                    .unwrap_or_default(),
                Mode::Behaviour(_) => e.descriptor.clone(),
            };
            write_descriptor_row(&mut desc, &key.to_string(), &values).expect("vec write");
        }
        write_with_header(
            &dir.join(format!("descriptors_{}.csv", rep_name(r))),
            &run.prov,
            &String::from_utf8(desc).expect("utf-8"),
        )?;

        let best_key = if has_reference {
            load_reference(run, r)?.best_key
        } else {
            archive
                .best()
                .map(|(k, _)| k)
                .ok_or_else(|| CliError::new(ErrorKind::Empty, "archive is empty"))?
        };
        let elite = archive.get(best_key).ok_or_else(|| {
            CliError::new(
                ErrorKind::Integrity,
                format!("cell {best_key} missing from archive"),
            )
        })?;
        let env = EnvironmentSpec::NORMAL;
        let log = run_trial_cycles(
            &env,
            &elite.genome,
            &FaultAssignment::none(env.robots),
            derive(run.seed(), &[label("export"), r as u64]),
            run.config.cycles(),
        )
        .map_err(run_error)?;
        let mut body = Vec::new();
        log.write_csv(&mut body).expect("vec write");
        write_with_header(
            &dir.join(format!("best_trial_{}.csv", rep_name(r))),
            &run.prov,
            &format!(
                "# cell_key={best_key}\n{}",
                String::from_utf8(body).expect("utf-8")
            ),
        )?;
    }
    seal_stage(&dir, &run.prov)
}

/// Records of one run, tagged with its task and algorithm.
#[derive(Debug, Clone)]
pub struct RunRecords {
    pub dir: PathBuf,
    pub task: TaskKind,
    pub algorithm: Algorithm,
    pub prov: Provenance,
    pub records: Vec<RecoveryRecord>,
}

pub fn load_records(dir: &Path) -> Result<RunRecords> {
    let run = Run::load(dir)?;
    require_stage(&run.stage(FAULTS_DIR), &run.prov, "faults")?;
    let path = run.stage(FAULTS_DIR).join(RECORDS_FILE);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let records = read_records(&text)
        .map_err(|e| CliError::new(ErrorKind::Integrity, format!("{}: {e}", path.display())))?;
    Ok(RunRecords {
        dir: dir.to_path_buf(),
        task: run.task()?,
        algorithm: run.algorithm(),
        prov: run.prov,
        records,
    })
}

/// The three recovery signatures: (x, y, name).
pub const SIGNATURES: [(RecordField, RecordField, &str); 3] = [
    (
        RecordField::Impact,
        RecordField::Resilience,
        "impact_resilience",
    ),
    (
        RecordField::Distance,
        RecordField::Resilience,
        "distance_resilience",
    ),
    (
        RecordField::Impact,
        RecordField::Distance,
        "impact_distance",
    ),
];

pub const ANALYSIS_SUMMARY_HEADER: &str = "task,algorithm,runs,records,median_impact,median_resilience,median_distance,median_normal_best,median_recovered,normalised_normal_best,normalised_recovered";
pub const PAIRWISE_HEADER: &str = "task,algorithm_a,algorithm_b,n_a,n_b,resilience_p,resilience_delta,resilience_magnitude,impact_p,impact_delta,impact_magnitude,distance_p,distance_delta,distance_magnitude";
pub const SIGNATURE_HEADER: &str =
    "task,algorithm,signature,points,slope,intercept,correlation,bandwidth_x,bandwidth_y,kde_file";

fn med(v: &[f64]) -> f64 {
    median(v).unwrap_or(f64::NAN)
}

fn stat_cells(r: std::result::Result<StatResult, impl std::fmt::Display>) -> String {
    match r {
        Ok(s) => format!("{},{},{}", s.p_value, s.delta, s.magnitude.name()),
        Err(e) => {
            log::warn!("pairwise comparison skipped: {e}");
            "NaN,NaN,".to_string()
        }
    }
}

/// Cross-run analysis: per (task, algorithm) summaries normalised by the
/// task's empirical maximum, pairwise Wilcoxon/Cliff tables between
/// algorithms of a task, and the recovery signatures.
pub fn analyze(run_dirs: &[PathBuf], out: &Path) -> Result<()> {
    if run_dirs.is_empty() {
        return Err(CliError::new(
            ErrorKind::Config,
            "analyze needs at least one run directory",
        ));
    }
    let runs = run_dirs
        .iter()
        .map(|d| load_records(d))
        .collect::<Result<Vec<_>>>()?;
    let mut hashes: Vec<&str> = runs.iter().map(|r| r.prov.config_hash.as_str()).collect();
    hashes.sort();
    let combined = hex::encode(Sha256::digest(hashes.join(",").as_bytes()));
    let seeds: BTreeSet<&str> = runs.iter().map(|r| r.prov.seed.as_str()).collect();
    let prov = Provenance::new(combined, seeds.into_iter().collect::<Vec<_>>().join("+"));

    let dir = out.join(ANALYSIS_DIR);
    if begin_stage(&dir, &prov)? == StageStatus::Complete {
        stage_done(&dir, "analyze");
        return Ok(());
    }

    let mut groups: BTreeMap<(TaskKind, Algorithm), (usize, Vec<RecoveryRecord>)> = BTreeMap::new();
    for r in &runs {
        let g = groups.entry((r.task, r.algorithm)).or_default();
        g.0 += 1;
        g.1.extend(r.records.iter().cloned());
    }
    let mut task_max: BTreeMap<TaskKind, f64> = BTreeMap::new();
    for ((task, _), (_, records)) in &groups {
        let m = task_max.entry(*task).or_insert(f64::NEG_INFINITY);
        for rec in records {
            *m = m
                .max(rec.normal_best_performance)
                .max(rec.recovered_performance);
        }
    }

    let mut summary = format!("{ANALYSIS_SUMMARY_HEADER}\n");
    for ((task, alg), (n_runs, records)) in &groups {
        let col = |f: fn(&RecoveryRecord) -> f64| records.iter().map(f).collect::<Vec<f64>>();
        let normal = med(&col(|r| r.normal_best_performance));
        let recovered = med(&col(|r| r.recovered_performance));
        let max = task_max[task];
        let norm = |v: f64| if max > 0.0 { v / max } else { f64::NAN };
        let _ = writeln!(
            summary,
            "{task},{alg},{n_runs},{},{},{},{},{normal},{recovered},{},{}",
            records.len(),
            med(&col(|r| r.impact)),
            med(&col(|r| r.resilience)),
            med(&col(|r| r.distance)),
            norm(normal),
            norm(recovered),
        );
    }
    write_with_header(&dir.join(SUMMARY_FILE), &prov, &summary)?;

    let mut pairwise = format!("{PAIRWISE_HEADER}\n");
    let mut pairs = 0;
    let keys: Vec<(TaskKind, Algorithm)> = groups.keys().copied().collect();
    for (i, a) in keys.iter().enumerate() {
        for b in &keys[i + 1..] {
            if a.0 != b.0 {
                continue;
            }
            let (ra, rb) = (&groups[a].1, &groups[b].1);
            let cells = [
                RecordField::Resilience,
                RecordField::Impact,
                RecordField::Distance,
            ]
            .iter()
            .map(|f| {
                let x: Vec<f64> = ra.iter().map(|r| f.get(r)).collect();
                let y: Vec<f64> = rb.iter().map(|r| f.get(r)).collect();
                stat_cells(compare(&x, &y))
            })
            .collect::<Vec<_>>()
            .join(",");
            let _ = writeln!(
                pairwise,
                "{},{},{},{},{},{cells}",
                a.0,
                a.1,
                b.1,
                ra.len(),
                rb.len()
            );
            pairs += 1;
        }
    }
    if pairs > 0 {
        write_with_header(&dir.join("pairwise.csv"), &prov, &pairwise)?;
    }

    let mut sigs = format!("{SIGNATURE_HEADER}\n");
    for ((task, alg), (_, records)) in &groups {
        for (x, y, name) in SIGNATURES {
            match signature(records, x, y) {
                Ok(s) => {
                    let file = format!("kde/{task}_{alg}_{name}.csv");
                    let mut grid = String::from("x,y,density\n");
                    for (j, yv) in s.kde.ys.iter().enumerate() {
                        for (i, xv) in s.kde.xs.iter().enumerate() {
                            let _ = writeln!(
                                grid,
                                "{xv},{yv},{}",
                                s.kde.density[j * s.kde.xs.len() + i]
                            );
                        }
                    }
                    write_with_header(&dir.join(&file), &prov, &grid)?;
                    let _ = writeln!(
                        sigs,
                        "{task},{alg},{name},{},{},{},{},{},{},{file}",
                        s.points,
                        s.fit.slope,
                        s.fit.intercept,
                        s.fit.correlation,
                        s.kde.bandwidth.0,
                        s.kde.bandwidth.1
                    );
                }
                Err(e) => {
                    log::warn!("{task} {alg} {name}: signature skipped: {e}");
                    let _ = writeln!(sigs, "{task},{alg},{name},0,NaN,NaN,NaN,NaN,NaN,");
                }
            }
        }
    }
    write_with_header(&dir.join("signatures.csv"), &prov, &sigs)?;
    seal_stage(&dir, &prov)
}
