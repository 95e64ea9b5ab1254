//! MAP-Elites archives, CVT tessellation and the evolutionary loop, both
//! with behaviour descriptors and with environment descriptors (QED).

mod archive;
mod cvt;
mod persist;

use log::warn;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

pub use archive::{Archive, CellIndexer, Elite, ARCHIVE_CELLS, HBD_BINS};
pub use cvt::{generate_cvt_centroids, kmeans, sample_seeds, Centroids, CvtError, CvtParams};
pub use persist::{read_archive, write_archive, PersistError, INDEX_FILE};

use crate::descriptors::{BehaviourKind, DescriptorError, Recorder};
use crate::env::{
    EnvironmentSpec, AREA_SET, OBSTACLES_SET, PROXIMITY_RANGE_SET, RAB_RANGE_SET, ROBOTS_SET,
    SPEED_SET,
};
use crate::genome::{mutate, random_genome, Genome, MutationParams};
use crate::seed::{derive, label, rng_for};
use crate::sim::{simulate, FaultAssignment, RobotBody};
use crate::tasks::{Fitness, TaskError, TaskKind};

/// Draws every attribute independently and uniformly from its set.
pub fn generate_environment<R: Rng + ?Sized>(rng: &mut R) -> EnvironmentSpec {
    EnvironmentSpec {
        max_speed_cm_s: SPEED_SET[rng.random_range(0..4)],
        robots: ROBOTS_SET[rng.random_range(0..4)],
        arena_area_m2: AREA_SET[rng.random_range(0..4)],
        obstacles: OBSTACLES_SET[rng.random_range(0..4)],
        rab_range_cm: RAB_RANGE_SET[rng.random_range(0..4)],
        proximity_range_cm: PROXIMITY_RANGE_SET[rng.random_range(0..4)],
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
}

impl From<crate::sim::SimError> for EvalError {
    fn from(e: crate::sim::SimError) -> Self {
        EvalError::Task(e.into())
    }
}

/// Performance and behaviour descriptor of one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub performance: f64,
    pub descriptor: Vec<f64>,
}

pub trait Evaluator: Sync {
    fn evaluate(
        &self,
        genome: &Genome,
        env: &EnvironmentSpec,
        seed: u64,
    ) -> Result<Evaluation, EvalError>;
}

/// Seed of trial `trial` within the evaluation seeded by `eval_seed`.
pub fn trial_seed(eval_seed: u64, trial: usize) -> u64 {
    derive(eval_seed, &[trial as u64])
}

/// Simulated multi-trial evaluation of a task, optionally recording a
/// behaviour descriptor.
#[derive(Debug, Clone)]
pub struct SwarmEvaluator {
    pub task: TaskKind,
    pub behaviour: Option<BehaviourKind>,
    pub trials: usize,
    pub cycles: usize,
}

impl SwarmEvaluator {
    pub fn new(task: TaskKind, behaviour: Option<BehaviourKind>, trials: usize) -> Self {
        SwarmEvaluator {
            task,
            behaviour,
            trials,
            cycles: crate::sim::cycles_for(crate::sim::TRIAL_SECONDS),
        }
    }

    /// Runs the trials with explicit seeds and fault assignment.
    pub fn evaluate_with(
        &self,
        genome: &Genome,
        env: &EnvironmentSpec,
        faults: &FaultAssignment,
        seeds: &[u64],
    ) -> Result<Evaluation, EvalError> {
        if seeds.is_empty() {
            return Err(TaskError::NoSeeds.into());
        }
        let body = RobotBody::for_environment(env);
        let mut recorder = self.behaviour.map(Recorder::new);
        let mut total = 0.0;
        for &seed in seeds {
            let mut fitness = Fitness::for_environment(self.task, env);
            match recorder.as_mut() {
                Some(r) => {
                    r.begin_trial(env.arena_side(), &body);
                    simulate(
                        env,
                        genome,
                        faults,
                        seed,
                        self.cycles,
                        &mut (&mut fitness, &mut *r),
                    )?;
                    r.end_trial()?;
                }
                None => {
                    simulate(env, genome, faults, seed, self.cycles, &mut fitness)?;
                }
            }
            total += fitness.value()?;
        }
        let descriptor = match recorder {
            Some(r) => r.finish()?,
            None => Vec::new(),
        };
        Ok(Evaluation {
            performance: total / seeds.len() as f64,
            descriptor,
        })
    }
}

impl Evaluator for SwarmEvaluator {
    fn evaluate(
        &self,
        genome: &Genome,
        env: &EnvironmentSpec,
        seed: u64,
    ) -> Result<Evaluation, EvalError> {
        let seeds: Vec<u64> = (0..self.trials).map(|t| trial_seed(seed, t)).collect();
        self.evaluate_with(genome, env, &FaultAssignment::none(env.robots), &seeds)
    }
}

/// Where candidates are evaluated and how they are keyed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Random perturbed environment per evaluation, keyed by environment.
    Qed,
    /// Normal environment, keyed by behaviour.
    Behaviour(BehaviourKind),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionConfig {
    pub mode: Mode,
    pub initial_population: usize,
    pub generations: usize,
    pub batch_size: usize,
    pub mutation: MutationParams,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationStats {
    /// 0 is the initial population.
    pub generation: usize,
    pub evaluations: u64,
    pub coverage: usize,
    pub best: f64,
    pub mean: f64,
    pub insertions: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EvolutionEvent {
    Inserted {
        generation: usize,
        key: usize,
        performance: f64,
        eval_id: u64,
    },
    Generation(GenerationStats),
}

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("invalid evolution config: {0}")]
    Config(String),
    #[error("archive layout does not match the evolution mode")]
    Layout,
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<(), EvolveError> {
        if self.initial_population == 0 || self.batch_size == 0 {
            return Err(EvolveError::Config(
                "initial population and batch size must be at least 1".into(),
            ));
        }
        if !self.mutation.is_valid() {
            return Err(EvolveError::Config(
                "mutation probabilities must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

struct Candidate {
    eval_id: u64,
    genome: Genome,
    env: EnvironmentSpec,
}

fn environment_for(config: &EvolutionConfig, eval_id: u64) -> EnvironmentSpec {
    match config.mode {
        Mode::Qed => {
            generate_environment(&mut rng_for(config.seed, &[label("environment"), eval_id]))
        }
        Mode::Behaviour(_) => EnvironmentSpec::NORMAL,
    }
}

/// Evaluates candidates in parallel and inserts them in evaluation order.
fn evaluate_batch<E: Evaluator, F: FnMut(&EvolutionEvent)>(
    config: &EvolutionConfig,
    archive: &mut Archive,
    evaluator: &E,
    batch: Vec<Candidate>,
    generation: usize,
    on_event: &mut F,
) -> (usize, usize) {
    let results: Vec<Result<Evaluation, EvalError>> = batch
        .par_iter()
        .map(|c| {
            evaluator.evaluate(
                &c.genome,
                &c.env,
                derive(config.seed, &[label("evaluate"), c.eval_id]),
            )
        })
        .collect();
    let (mut insertions, mut failures) = (0, 0);
    for (c, r) in batch.into_iter().zip(results) {
        let eval = match r {
            Ok(e) => e,
            Err(e) => {
                warn!(
                    "evaluation {} failed in {}: {e}; scored 0",
                    c.eval_id, c.env
                );
                failures += 1;
                Evaluation {
                    performance: 0.0,
                    descriptor: Vec::new(),
                }
            }
        };
        let elite = Elite {
            genome: c.genome,
            performance: eval.performance,
            descriptor: eval.descriptor,
            environment: c.env,
            eval_id: c.eval_id,
        };
        let performance = elite.performance;
        if let Some((key, true)) = archive.try_insert(elite) {
            insertions += 1;
            on_event(&EvolutionEvent::Inserted {
                generation,
                key,
                performance,
                eval_id: c.eval_id,
            });
        }
    }
    (insertions, failures)
}

/// MAP-Elites: random initial population, then per generation a batch of
/// mutated copies of uniformly selected elites. Results are independent of
/// the thread count.
pub fn evolve<E: Evaluator, F: FnMut(&EvolutionEvent)>(
    config: &EvolutionConfig,
    indexer: CellIndexer,
    evaluator: &E,
    mut on_event: F,
) -> Result<Archive, EvolveError> {
    config.validate()?;
    match (&config.mode, &indexer) {
        (Mode::Qed, CellIndexer::Environment) => {}
        (Mode::Behaviour(_), CellIndexer::Grid { .. } | CellIndexer::Cvt(_)) => {}
        _ => return Err(EvolveError::Layout),
    }
    let mut archive = Archive::new(indexer);
    let mut next_id = 0u64;

    let init: Vec<Candidate> = (0..config.initial_population)
        .map(|i| {
            let eval_id = i as u64;
            Candidate {
                eval_id,
                genome: random_genome(&mut rng_for(config.seed, &[label("init"), eval_id])),
                env: environment_for(config, eval_id),
            }
        })
        .collect();
    next_id += init.len() as u64;
    let (insertions, failures) =
        evaluate_batch(config, &mut archive, evaluator, init, 0, &mut on_event);
    emit_stats(&archive, 0, next_id, insertions, failures, &mut on_event);

    for generation in 1..=config.generations {
        let keys = archive.keys();
        let mut select = rng_for(config.seed, &[label("select"), generation as u64]);
        let batch: Vec<Candidate> = (0..config.batch_size)
            .filter_map(|_| {
                let parent = archive.get(*keys.get(select.random_range(0..keys.len().max(1)))?)?;
                let eval_id = next_id;
                next_id += 1;
                let genome = mutate(
                    &parent.genome,
                    &config.mutation,
                    &mut rng_for(config.seed, &[label("mutate"), eval_id]),
                );
                Some(Candidate {
                    eval_id,
                    genome,
                    env: environment_for(config, eval_id),
                })
            })
            .collect();
        let (insertions, failures) = evaluate_batch(
            config,
            &mut archive,
            evaluator,
            batch,
            generation,
            &mut on_event,
        );
        emit_stats(
            &archive,
            generation,
            next_id,
            insertions,
            failures,
            &mut on_event,
        );
    }
    Ok(archive)
}

fn emit_stats<F: FnMut(&EvolutionEvent)>(
    archive: &Archive,
    generation: usize,
    evaluations: u64,
    insertions: usize,
    failures: usize,
    on_event: &mut F,
) {
    on_event(&EvolutionEvent::Generation(GenerationStats {
        generation,
        evaluations,
        coverage: archive.coverage(),
        best: archive.best().map_or(0.0, |(_, e)| e.performance),
        mean: archive.mean_performance(),
        insertions,
        failures,
    }));
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    /// Cheap deterministic stand-in: performance is a hash of the seed.
    struct Stub;

    impl Evaluator for Stub {
        fn evaluate(
            &self,
            genome: &Genome,
            _env: &EnvironmentSpec,
            seed: u64,
        ) -> Result<Evaluation, EvalError> {
            let h = derive(seed, &[genome.connections().len() as u64]);
            let u = (h >> 11) as f64 / (1u64 << 53) as f64;
            Ok(Evaluation {
                performance: u,
                descriptor: vec![u, (h & 0xff) as f64 / 255.0, 0.5],
            })
        }
    }

    fn config(mode: Mode) -> EvolutionConfig {
        EvolutionConfig {
            mode,
            initial_population: 50,
            generations: 30,
            batch_size: 10,
            mutation: MutationParams::default(),
            seed: 17,
        }
    }

    #[test]
    fn generated_environments_use_table_values() {
        let mut rng = rng_for(1, &[]);
        let mut counts = [[0usize; 4]; 6];
        for _ in 0..40_960 {
            let e = generate_environment(&mut rng);
            for (a, &i) in e.indices().unwrap().iter().enumerate() {
                counts[a][i] += 1;
            }
        }
        for row in counts {
            for c in row {
                assert!((c as i64 - 10_240).abs() <= 400, "{c}");
            }
        }
    }

    #[test]
    fn initial_archive_is_bounded_by_population() {
        let cfg = EvolutionConfig {
            generations: 0,
            ..config(Mode::Qed)
        };
        let a = evolve(&cfg, CellIndexer::Environment, &Stub, |_| {}).unwrap();
        assert!(a.len() <= 50 && !a.is_empty());
    }

    #[test]
    fn qed_keys_decode_to_evaluation_environment() {
        let a = evolve(&config(Mode::Qed), CellIndexer::Environment, &Stub, |_| {}).unwrap();
        for (key, e) in a.iter() {
            let d = crate::descriptors::EnvDescriptor::from_key(key).unwrap();
            assert_eq!(d.spec(), e.environment);
        }
    }

    #[test]
    fn elitism_and_monotone_coverage() {
        let mut trace: BTreeMap<usize, f64> = BTreeMap::new();
        let mut coverage = 0;
        evolve(
            &config(Mode::Behaviour(BehaviourKind::Hbd)),
            CellIndexer::hbd(),
            &Stub,
            |ev| match ev {
                EvolutionEvent::Inserted {
                    key, performance, ..
                } => {
                    if let Some(&old) = trace.get(key) {
                        assert!(*performance > old);
                    }
                    trace.insert(*key, *performance);
                }
                EvolutionEvent::Generation(s) => {
                    assert!(s.coverage >= coverage);
                    coverage = s.coverage;
                }
            },
        )
        .unwrap();
        assert!(coverage > 0);
    }

    #[test]
    fn independent_of_thread_count() {
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                evolve(&config(Mode::Qed), CellIndexer::Environment, &Stub, |_| {}).unwrap()
            })
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn mismatched_layout_is_rejected() {
        assert!(matches!(
            evolve(&config(Mode::Qed), CellIndexer::hbd(), &Stub, |_| {}),
            Err(EvolveError::Layout)
        ));
    }

    #[test]
    fn simulated_evaluation_is_reproducible() {
        let ev = SwarmEvaluator {
            task: TaskKind::Aggregation,
            behaviour: Some(BehaviourKind::Hbd),
            trials: 2,
            cycles: 50,
        };
        let g = random_genome(&mut rng_for(2, &[]));
        let a = ev.evaluate(&g, &EnvironmentSpec::NORMAL, 5).unwrap();
        let b = ev.evaluate(&g, &EnvironmentSpec::NORMAL, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.descriptor.len(), 3);
        assert!((0.0..=1.0).contains(&a.performance));
    }
}
