//! Swarm task fitness functions.
//!
//! Every fitness is a [`TrialObserver`], so it can be fed live from
//! [`simulate`] or replayed from a stored [`TrialLog`].

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::env::EnvironmentSpec;
use crate::genome::Genome;
use crate::sim::{simulate, CycleView, FaultAssignment, SimError, TrialLog, TrialObserver, DT};

/// Pairs closer than this (m) contribute to flocking.
pub const FLOCKING_RANGE: f64 = 0.5;
/// Patrol grid cells per side.
pub const PATROL_GRID: usize = 10;
/// Patrol cell decay per second.
pub const PATROL_DECAY: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TaskKind {
    Aggregation,
    Dispersion,
    Flocking,
    Patrolling,
    BorderPatrolling,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::Aggregation,
        TaskKind::Dispersion,
        TaskKind::Flocking,
        TaskKind::Patrolling,
        TaskKind::BorderPatrolling,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Aggregation => "aggregation",
            TaskKind::Dispersion => "dispersion",
            TaskKind::Flocking => "flocking",
            TaskKind::Patrolling => "patrolling",
            TaskKind::BorderPatrolling => "border-patrolling",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown task `{0}`")]
pub struct UnknownTask(pub String);

impl FromStr for TaskKind {
    type Err = UnknownTask;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| UnknownTask(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TaskError {
    #[error("{task} needs at least 2 robots, got {robots}")]
    TooFewRobots { task: TaskKind, robots: usize },
    #[error("performance needs at least one trial seed")]
    NoSeeds,
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Equation-level aggregation fitness: mean of `1 - |x_r - x_cm| / M`.
#[derive(Debug, Clone, Default)]
pub struct Aggregation {
    diagonal: f64,
    sum: f64,
    cycles: usize,
}

impl Aggregation {
    pub fn new(side: f64) -> Self {
        Aggregation {
            diagonal: side * std::f64::consts::SQRT_2,
            ..Default::default()
        }
    }

    pub fn value(&self) -> f64 {
        if self.cycles == 0 {
            return 0.0;
        }
        self.sum / self.cycles as f64
    }
}

impl TrialObserver for Aggregation {
    fn observe(&mut self, c: &CycleView<'_>) {
        let n = c.poses.len();
        if n == 0 {
            return;
        }
        let (mut cx, mut cy) = (0.0, 0.0);
        for p in c.poses {
            cx += p.x;
            cy += p.y;
        }
        cx /= n as f64;
        cy /= n as f64;
        let total: f64 = c
            .poses
            .iter()
            .map(|p| 1.0 - (p.x - cx).hypot(p.y - cy) / self.diagonal)
            .sum();
        self.sum += total / n as f64;
        self.cycles += 1;
    }
}

/// Mean nearest-neighbour distance over `M / 2`, clamped to 1 per trial.
#[derive(Debug, Clone, Default)]
pub struct Dispersion {
    half_diagonal: f64,
    sum: f64,
    cycles: usize,
    robots: usize,
}

impl Dispersion {
    pub fn new(side: f64) -> Self {
        Dispersion {
            half_diagonal: side * std::f64::consts::SQRT_2 / 2.0,
            ..Default::default()
        }
    }

    /// Unclamped value.
    pub fn raw(&self) -> Result<f64, TaskError> {
        if self.cycles > 0 && self.robots < 2 {
            return Err(TaskError::TooFewRobots {
                task: TaskKind::Dispersion,
                robots: self.robots,
            });
        }
        if self.cycles == 0 {
            return Ok(0.0);
        }
        Ok(self.sum / self.cycles as f64)
    }

    pub fn value(&self) -> Result<f64, TaskError> {
        self.raw().map(|v| v.min(1.0))
    }
}

impl TrialObserver for Dispersion {
    fn observe(&mut self, c: &CycleView<'_>) {
        let n = c.poses.len();
        self.robots = n;
        self.cycles += 1;
        if n < 2 {
            return;
        }
        let mut total = 0.0;
        for (i, p) in c.poses.iter().enumerate() {
            let nearest = c
                .poses
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| (p.x - q.x).powi(2) + (p.y - q.y).powi(2))
                .fold(f64::INFINITY, f64::min);
            total += nearest.sqrt() / self.half_diagonal;
        }
        self.sum += total / n as f64;
    }
}

/// Rewards close pairs moving forward with similar headings.
#[derive(Debug, Clone, Default)]
pub struct Flocking {
    max_speed: f64,
    sum: f64,
    cycles: usize,
    robots: usize,
}

impl Flocking {
    pub fn new(max_speed: f64) -> Self {
        Flocking {
            max_speed,
            ..Default::default()
        }
    }

    /// 0 for swarms of fewer than two robots, which have no pairs.
    pub fn value(&self) -> f64 {
        if self.cycles == 0 || self.robots < 2 {
            return 0.0;
        }
        let pairs = (self.robots * (self.robots - 1) / 2) as f64;
        self.sum / (self.cycles as f64 * pairs)
    }
}

impl TrialObserver for Flocking {
    fn observe(&mut self, c: &CycleView<'_>) {
        let n = c.poses.len();
        self.robots = n;
        self.cycles += 1;
        let right = std::f64::consts::FRAC_PI_2;
        for i in 0..n {
            let (pi, vi) = (c.poses[i], c.velocities[i].linear / self.max_speed);
            for j in i + 1..n {
                let pj = c.poses[j];
                if (pi.x - pj.x).hypot(pi.y - pj.y) >= FLOCKING_RANGE {
                    continue;
                }
                let vv = vi * c.velocities[j].linear / self.max_speed;
                if vv <= 0.0 {
                    continue;
                }
                let dtheta = crate::sim::wrap_angle(pi.heading - pj.heading).abs();
                self.sum += (1.0 - (dtheta / right).min(1.0)) * vv;
            }
        }
    }
}

/// Which cells of the patrol grid are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatrolCells {
    All,
    Border,
}

/// 10 x 10 visitation grid. A visited cell is set to 1; any other cell decays
/// linearly at [`PATROL_DECAY`] per second, floored at 0.
#[derive(Debug, Clone)]
pub struct PatrolGrid {
    cell: f64,
    dt: f64,
    /// Cycle at which each cell was last visited.
    last_visit: [Option<usize>; PATROL_GRID * PATROL_GRID],
    cycle: usize,
}

impl PatrolGrid {
    pub fn new(side: f64, dt: f64) -> Self {
        PatrolGrid {
            cell: side / PATROL_GRID as f64,
            dt,
            last_visit: [None; PATROL_GRID * PATROL_GRID],
            cycle: 0,
        }
    }

    pub fn is_border(index: usize) -> bool {
        let (r, c) = (index / PATROL_GRID, index % PATROL_GRID);
        r == 0 || c == 0 || r == PATROL_GRID - 1 || c == PATROL_GRID - 1
    }

    pub fn cell_of(&self, x: f64, y: f64) -> usize {
        let clamp = |v: f64| ((v / self.cell).floor().max(0.0) as usize).min(PATROL_GRID - 1);
        clamp(y) * PATROL_GRID + clamp(x)
    }

    /// Marks the cells under `positions` as visited in the next cycle.
    pub fn step<I: IntoIterator<Item = (f64, f64)>>(&mut self, positions: I) {
        for (x, y) in positions {
            let k = self.cell_of(x, y);
            self.last_visit[k] = Some(self.cycle);
        }
        self.cycle += 1;
    }

    /// Value of cell `index` after the most recent step.
    pub fn value(&self, index: usize) -> f64 {
        match self.last_visit[index] {
            None => 0.0,
            Some(v) => {
                let idle = (self.cycle - 1 - v) as f64 * self.dt;
                (1.0 - idle * PATROL_DECAY).max(0.0)
            }
        }
    }

    pub fn values(&self) -> [f64; PATROL_GRID * PATROL_GRID] {
        std::array::from_fn(|k| self.value(k))
    }
}

/// Mean patrol-grid value over cells and cycles.
#[derive(Debug, Clone)]
pub struct Patrol {
    grid: PatrolGrid,
    cells: PatrolCells,
    sum: f64,
    cycles: usize,
}

impl Patrol {
    pub fn new(side: f64, dt: f64, cells: PatrolCells) -> Self {
        Patrol {
            grid: PatrolGrid::new(side, dt),
            cells,
            sum: 0.0,
            cycles: 0,
        }
    }

    pub fn value(&self) -> f64 {
        if self.cycles == 0 {
            return 0.0;
        }
        self.sum / self.cycles as f64
    }
}

impl TrialObserver for Patrol {
    fn observe(&mut self, c: &CycleView<'_>) {
        self.grid.step(c.poses.iter().map(|p| (p.x, p.y)));
        let scored = (0..PATROL_GRID * PATROL_GRID)
            .filter(|&k| self.cells == PatrolCells::All || PatrolGrid::is_border(k));
        let (mut total, mut count) = (0.0, 0usize);
        for k in scored {
            total += self.grid.value(k);
            count += 1;
        }
        self.sum += total / count as f64;
        self.cycles += 1;
    }
}

/// Streaming fitness for any task.
#[derive(Debug, Clone)]
pub enum Fitness {
    Aggregation(Aggregation),
    Dispersion(Dispersion),
    Flocking(Flocking),
    Patrol(Box<Patrol>),
}

impl Fitness {
    pub fn new(task: TaskKind, side: f64, max_speed: f64) -> Self {
        match task {
            TaskKind::Aggregation => Fitness::Aggregation(Aggregation::new(side)),
            TaskKind::Dispersion => Fitness::Dispersion(Dispersion::new(side)),
            TaskKind::Flocking => Fitness::Flocking(Flocking::new(max_speed)),
            TaskKind::Patrolling => {
                Fitness::Patrol(Box::new(Patrol::new(side, DT, PatrolCells::All)))
            }
            TaskKind::BorderPatrolling => {
                Fitness::Patrol(Box::new(Patrol::new(side, DT, PatrolCells::Border)))
            }
        }
    }

    pub fn for_environment(task: TaskKind, env: &EnvironmentSpec) -> Self {
        Fitness::new(task, env.arena_side(), env.max_speed_cm_s / 100.0)
    }

    pub fn value(&self) -> Result<f64, TaskError> {
        match self {
            Fitness::Aggregation(f) => Ok(f.value()),
            Fitness::Dispersion(f) => f.value(),
            Fitness::Flocking(f) => Ok(f.value()),
            Fitness::Patrol(f) => Ok(f.value()),
        }
    }
}

impl TrialObserver for Fitness {
    fn observe(&mut self, c: &CycleView<'_>) {
        match self {
            Fitness::Aggregation(f) => f.observe(c),
            Fitness::Dispersion(f) => f.observe(c),
            Fitness::Flocking(f) => f.observe(c),
            Fitness::Patrol(f) => f.observe(c),
        }
    }
}

fn replay(task: TaskKind, log: &TrialLog) -> Fitness {
    let mut f = Fitness::new(task, log.arena.side_length, log.body.max_linear_speed);
    log.replay(&mut f);
    f
}

pub fn fitness(task: TaskKind, log: &TrialLog) -> Result<f64, TaskError> {
    replay(task, log).value()
}

pub fn fitness_aggregation(log: &TrialLog) -> f64 {
    let mut f = Aggregation::new(log.arena.side_length);
    log.replay(&mut f);
    f.value()
}

pub fn fitness_dispersion(log: &TrialLog) -> Result<f64, TaskError> {
    let mut f = Dispersion::new(log.arena.side_length);
    log.replay(&mut f);
    f.value()
}

pub fn fitness_flocking(log: &TrialLog) -> f64 {
    let mut f = Flocking::new(log.body.max_linear_speed);
    log.replay(&mut f);
    f.value()
}

pub fn fitness_patrolling(log: &TrialLog) -> f64 {
    let mut f = Patrol::new(log.arena.side_length, log.body.dt, PatrolCells::All);
    log.replay(&mut f);
    f.value()
}

pub fn fitness_border_patrolling(log: &TrialLog) -> f64 {
    let mut f = Patrol::new(log.arena.side_length, log.body.dt, PatrolCells::Border);
    log.replay(&mut f);
    f.value()
}

/// Mean fitness over one full-length trial per seed.
pub fn performance(
    task: TaskKind,
    env: &EnvironmentSpec,
    genome: &Genome,
    faults: &FaultAssignment,
    seeds: &[u64],
) -> Result<f64, TaskError> {
    performance_cycles(
        task,
        env,
        genome,
        faults,
        seeds,
        crate::sim::cycles_for(crate::sim::TRIAL_SECONDS),
    )
}

pub fn performance_cycles(
    task: TaskKind,
    env: &EnvironmentSpec,
    genome: &Genome,
    faults: &FaultAssignment,
    seeds: &[u64],
    cycles: usize,
) -> Result<f64, TaskError> {
    if seeds.is_empty() {
        return Err(TaskError::NoSeeds);
    }
    let mut total = 0.0;
    for &seed in seeds {
        let mut f = Fitness::for_environment(task, env);
        simulate(env, genome, faults, seed, cycles, &mut f)?;
        total += f.value()?;
    }
    Ok(total / seeds.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{ArenaSpec, Pose, RobotBody, Velocity};

    fn log(side: f64, frames: Vec<Vec<Pose>>, speeds: Vec<Vec<f64>>) -> TrialLog {
        let velocities = speeds
            .into_iter()
            .map(|v| {
                v.into_iter()
                    .map(|linear| Velocity {
                        linear,
                        angular: 0.0,
                    })
                    .collect()
            })
            .collect();
        TrialLog::from_poses(
            ArenaSpec::empty(side),
            RobotBody::normal(),
            frames,
            velocities,
        )
    }

    fn still(side: f64, poses: Vec<Pose>, cycles: usize) -> TrialLog {
        let n = poses.len();
        log(side, vec![poses; cycles], vec![vec![0.0; n]; cycles])
    }

    #[test]
    fn aggregation_cases() {
        let p = Pose::new(1.3, 2.2, 0.0);
        assert!((fitness_aggregation(&still(4.0, vec![p; 5], 10)) - 1.0).abs() < 1e-12);
        assert!((fitness_aggregation(&still(4.0, vec![p], 10)) - 1.0).abs() < 1e-12);
        let corners = vec![Pose::new(0.0, 0.0, 0.0), Pose::new(4.0, 4.0, 0.0)];
        assert!((fitness_aggregation(&still(4.0, corners, 10)) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn dispersion_cases() {
        let p = Pose::new(1.0, 1.0, 0.0);
        assert_eq!(fitness_dispersion(&still(4.0, vec![p; 3], 5)).unwrap(), 0.0);
        let apart = vec![Pose::new(1.0, 1.0, 0.0), Pose::new(2.0, 1.0, 0.0)];
        let expected = 1.0 / (2.0 * 2f64.sqrt());
        assert!((fitness_dispersion(&still(4.0, apart, 5)).unwrap() - expected).abs() < 1e-12);
        let corners = vec![Pose::new(0.0, 0.0, 0.0), Pose::new(4.0, 4.0, 0.0)];
        let mut d = Dispersion::new(4.0);
        still(4.0, corners.clone(), 3).replay(&mut d);
        assert!((d.raw().unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(fitness_dispersion(&still(4.0, corners, 3)).unwrap(), 1.0);
    }

    #[test]
    fn dispersion_needs_two_robots() {
        let err = fitness_dispersion(&still(4.0, vec![Pose::default()], 3)).unwrap_err();
        assert!(matches!(err, TaskError::TooFewRobots { robots: 1, .. }));
    }

    #[test]
    fn flocking_cases() {
        let side_by_side = vec![Pose::new(1.0, 1.0, 0.3), Pose::new(1.0, 1.2, 0.3)];
        let full = log(
            4.0,
            vec![side_by_side.clone(); 7],
            vec![vec![0.10, 0.10]; 7],
        );
        assert!((fitness_flocking(&full) - 1.0).abs() < 1e-12);
        assert_eq!(fitness_flocking(&still(4.0, side_by_side, 7)), 0.0);
        let far = vec![Pose::new(1.0, 1.0, 0.0), Pose::new(1.6, 1.0, 0.0)];
        assert_eq!(
            fitness_flocking(&log(4.0, vec![far; 7], vec![vec![0.1, 0.1]; 7])),
            0.0
        );
    }

    #[test]
    fn flocking_heading_penalty_and_reverse() {
        // 45 degrees apart: half reward
        let pair = vec![
            Pose::new(1.0, 1.0, 0.0),
            Pose::new(1.0, 1.2, std::f64::consts::FRAC_PI_4),
        ];
        let l = log(4.0, vec![pair.clone()], vec![vec![0.1, 0.1]]);
        assert!((fitness_flocking(&l) - 0.5).abs() < 1e-12);
        // both reversing at full speed with equal headings is rewarded
        let l = log(4.0, vec![pair.clone()], vec![vec![-0.1, -0.1]]);
        assert!(fitness_flocking(&l) > 0.0);
        // headings across the +-pi seam are close
        let seam = vec![Pose::new(1.0, 1.0, 3.1), Pose::new(1.0, 1.2, -3.1)];
        let l = log(4.0, vec![seam], vec![vec![0.1, 0.1]]);
        assert!(fitness_flocking(&l) > 0.9);
    }

    #[test]
    fn patrol_single_interior_cell() {
        let l = still(4.0, vec![Pose::new(2.1, 2.1, 0.0)], 2000);
        assert!((fitness_patrolling(&l) - 0.01).abs() < 1e-12);
        assert_eq!(fitness_border_patrolling(&l), 0.0);
    }

    #[test]
    fn patrol_empty_swarm_is_zero() {
        assert_eq!(fitness_patrolling(&still(4.0, vec![], 50)), 0.0);
    }

    #[test]
    fn patrol_linear_decay() {
        let mut g = PatrolGrid::new(4.0, DT);
        let k = g.cell_of(0.1, 0.1);
        g.step([(0.1, 0.1)]);
        assert_eq!(g.value(k), 1.0);
        for step in 1..=1000usize {
            g.step(std::iter::empty());
            let expected = (1.0 - PATROL_DECAY * DT * step as f64).max(0.0);
            assert!((g.value(k) - expected).abs() < 1e-12);
        }
        assert_eq!(g.value(k), 0.0, "200 s after the visit");
    }

    #[test]
    fn border_has_36_cells() {
        assert_eq!((0..100).filter(|&k| PatrolGrid::is_border(k)).count(), 36);
    }

    #[test]
    fn task_names_round_trip() {
        for t in TaskKind::ALL {
            assert_eq!(t.name().parse::<TaskKind>().unwrap(), t);
        }
        assert!("foraging".parse::<TaskKind>().is_err());
    }

    #[test]
    fn performance_matches_single_trial_fitness() {
        let env = EnvironmentSpec::NORMAL;
        let g = crate::genome::random_genome(&mut crate::seed::rng_for(4, &[]));
        let faults = FaultAssignment::none(10);
        for task in TaskKind::ALL {
            let log = crate::sim::run_trial_cycles(&env, &g, &faults, 77, 100).unwrap();
            let direct = fitness(task, &log).unwrap();
            let streamed = performance_cycles(task, &env, &g, &faults, &[77], 100).unwrap();
            assert_eq!(direct, streamed, "{task}");
            let repeated = performance_cycles(task, &env, &g, &faults, &[77, 77, 77], 100).unwrap();
            assert!((repeated - direct).abs() < 1e-15);
        }
    }

    #[test]
    fn performance_requires_seeds() {
        let env = EnvironmentSpec::NORMAL;
        let r = performance(
            TaskKind::Aggregation,
            &env,
            &Genome::empty(),
            &FaultAssignment::none(10),
            &[],
        );
        assert_eq!(r, Err(TaskError::NoSeeds));
    }
}
