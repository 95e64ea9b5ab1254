use std::f64::consts::PI;

use rand::Rng;

use super::faults::{apply_actuator_fault, apply_sensor_fault, FaultAssignment};
use super::log::{CycleView, TrialLog, TrialObserver};
use super::sensors::{offsets_into, proximity_into, rab_from_offsets};
use super::{
    cycles_for, wrap_angle, ArenaSpec, Obstacle, Pose, RobotBody, SensorFrame, SimError, Velocity,
    WheelCommand, OBSTACLE_SIDE, TRIAL_SECONDS,
};
use crate::env::EnvironmentSpec;
use crate::genome::{forward, Genome, NetworkState};
use crate::seed::{label, rng_for};

pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

const OVERLAP_TOLERANCE: f64 = 1e-9;
const PROJECTION_PASSES: usize = 8;

/// Arena, body parameters and current robot poses.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub arena: ArenaSpec,
    pub body: RobotBody,
    pub poses: Vec<Pose>,
}

/// Forward-Euler differential-drive update over one control period.
pub fn differential_drive_step(pose: Pose, vl: f64, vr: f64, body: &RobotBody) -> Pose {
    let v = Velocity::from_command(
        WheelCommand {
            left: vl,
            right: vr,
        },
        body,
    );
    drive_with_trig(pose, v, pose.heading.sin_cos(), body.dt)
}

fn drive_with_trig(pose: Pose, v: Velocity, (s, c): (f64, f64), dt: f64) -> Pose {
    Pose {
        x: pose.x + v.linear * c * dt,
        y: pose.y + v.linear * s * dt,
        heading: wrap_angle(pose.heading + v.angular * dt),
    }
}

fn uniform_heading<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // (-pi, pi]
    PI - rng.random::<f64>() * 2.0 * PI
}

/// Uniform rejection-sampled placement of obstacles then robots, none
/// overlapping each other or the walls.
pub fn place<R: Rng + ?Sized>(
    env: &EnvironmentSpec,
    body: &RobotBody,
    rng: &mut R,
) -> Result<World, SimError> {
    let side = env.arena_side();
    let mut attempts = 0usize;
    let h = OBSTACLE_SIDE / 2.0;
    let mut obstacles: Vec<Obstacle> = Vec::with_capacity(env.obstacles);
    while obstacles.len() < env.obstacles {
        attempts += 1;
        if attempts > MAX_PLACEMENT_ATTEMPTS {
            return Err(SimError::Placement {
                what: "obstacles",
                attempts: MAX_PLACEMENT_ATTEMPTS,
            });
        }
        let o = Obstacle {
            x: rng.random_range(h..side - h),
            y: rng.random_range(h..side - h),
        };
        if obstacles
            .iter()
            .all(|p| (p.x - o.x).abs() >= OBSTACLE_SIDE || (p.y - o.y).abs() >= OBSTACLE_SIDE)
        {
            obstacles.push(o);
        }
    }

    let r = body.radius;
    let mut poses: Vec<Pose> = Vec::with_capacity(env.robots);
    while poses.len() < env.robots {
        attempts += 1;
        if attempts > MAX_PLACEMENT_ATTEMPTS {
            return Err(SimError::Placement {
                what: "robots",
                attempts: MAX_PLACEMENT_ATTEMPTS,
            });
        }
        let x = rng.random_range(r..side - r);
        let y = rng.random_range(r..side - r);
        let clear_of_obstacles = obstacles.iter().all(|o| {
            let (cx, cy) = o.closest_point(x, y);
            (x - cx).hypot(y - cy) > r
        });
        let clear_of_robots = poses.iter().all(|p| (p.x - x).hypot(p.y - y) >= 2.0 * r);
        if clear_of_obstacles && clear_of_robots {
            poses.push(Pose {
                x,
                y,
                heading: uniform_heading(rng),
            });
        }
    }
    Ok(World {
        arena: ArenaSpec {
            side_length: side,
            obstacles,
        },
        body: *body,
        poses,
    })
}

fn push_out_of_obstacle(p: &mut Pose, o: &Obstacle, r: f64) -> f64 {
    let (cx, cy) = o.closest_point(p.x, p.y);
    let (dx, dy) = (p.x - cx, p.y - cy);
    let d2 = dx * dx + dy * dy;
    if d2 >= r * r {
        return 0.0;
    }
    let d = d2.sqrt();
    if d > 1e-12 {
        p.x += dx / d * (r - d);
        p.y += dy / d * (r - d);
        r - d
    } else {
        // centre inside the square: leave through the nearest face
        let h = o.half();
        let exits = [
            (o.x + h + r - p.x, 1.0, 0.0),
            (p.x - (o.x - h - r), -1.0, 0.0),
            (o.y + h + r - p.y, 0.0, 1.0),
            (p.y - (o.y - h - r), 0.0, -1.0),
        ];
        let (dist, ux, uy) = exits
            .into_iter()
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .expect("four exits");
        p.x += ux * dist;
        p.y += uy * dist;
        dist
    }
}

fn clamp_to_walls(p: &mut Pose, side: f64, r: f64) {
    p.x = p.x.clamp(r, side - r);
    p.y = p.y.clamp(r, side - r);
}

fn offenders(world: &World) -> Vec<usize> {
    let r = world.body.radius;
    let n = world.poses.len();
    let mut bad = vec![false; n];
    let pair_cut = (2.0 * r - OVERLAP_TOLERANCE).powi(2);
    let obstacle_cut = (r - OVERLAP_TOLERANCE).powi(2);
    for i in 0..n {
        let p = world.poses[i];
        for j in i + 1..n {
            let q = world.poses[j];
            if (p.x - q.x).powi(2) + (p.y - q.y).powi(2) < pair_cut {
                bad[i] = true;
                bad[j] = true;
            }
        }
        if world.arena.obstacles.iter().any(|o| {
            let (cx, cy) = o.closest_point(p.x, p.y);
            (p.x - cx).powi(2) + (p.y - cy).powi(2) < obstacle_cut
        }) {
            bad[i] = true;
        }
    }
    (0..n).filter(|&i| bad[i]).collect()
}

/// Positional projection: separates overlapping discs along their centre
/// line, pushes discs out of obstacles and clamps to the walls. Robots still
/// overlapping afterwards fall back to their previous (valid) position.
fn resolve_collisions(world: &mut World, prev: &[Pose]) {
    let r = world.body.radius;
    let side = world.arena.side_length;
    let n = world.poses.len();
    for _ in 0..PROJECTION_PASSES {
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (world.poses[i], world.poses[j]);
                let (dx, dy) = (b.x - a.x, b.y - a.y);
                let d2 = dx * dx + dy * dy;
                if d2 < 4.0 * r * r {
                    let d = d2.sqrt();
                    let overlap = 2.0 * r - d;
                    let (ux, uy) = if d > 1e-12 {
                        (dx / d, dy / d)
                    } else {
                        (1.0, 0.0)
                    };
                    world.poses[i].x -= 0.5 * overlap * ux;
                    world.poses[i].y -= 0.5 * overlap * uy;
                    world.poses[j].x += 0.5 * overlap * ux;
                    world.poses[j].y += 0.5 * overlap * uy;
                    worst = worst.max(overlap);
                }
            }
        }
        let mut clamped = false;
        for p in world.poses.iter_mut() {
            for o in &world.arena.obstacles {
                worst = worst.max(push_out_of_obstacle(p, o, r));
            }
            let (x, y) = (p.x, p.y);
            clamp_to_walls(p, side, r);
            clamped |= p.x != x || p.y != y;
        }
        if worst <= 1e-12 && !clamped {
            // nothing moved in this pass, so no overlap remains
            return;
        }
    }
    loop {
        let bad = offenders(world);
        if bad.is_empty() {
            break;
        }
        let mut progressed = false;
        for i in bad {
            let p = &mut world.poses[i];
            if p.x != prev[i].x || p.y != prev[i].y {
                p.x = prev[i].x;
                p.y = prev[i].y;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
}

/// Runs one trial of `cycles` control cycles, streaming each cycle to
/// `observer`. Returns the arena (with the sampled obstacle layout).
///
/// Each cycle: sense, apply sensor faults, network forward, wheel mapping,
/// actuator faults, integrate, resolve collisions.
pub fn simulate<O: TrialObserver + ?Sized>(
    env: &EnvironmentSpec,
    genome: &Genome,
    faults: &FaultAssignment,
    seed: u64,
    cycles: usize,
    observer: &mut O,
) -> Result<ArenaSpec, SimError> {
    if faults.len() != env.robots {
        return Err(SimError::FaultCount {
            got: faults.len(),
            expected: env.robots,
        });
    }
    let body = RobotBody::for_environment(env);
    let mut world = place(env, &body, &mut rng_for(seed, &[label("placement")]))?;
    let mut fault_rng = rng_for(seed, &[label("faults")]);
    let n = env.robots;
    let vmax = body.max_linear_speed;

    let mut states: Vec<NetworkState> = (0..n).map(|_| NetworkState::new(genome)).collect();
    let mut frames = vec![SensorFrame::default(); n];
    let mut commands = vec![WheelCommand::default(); n];
    let mut velocities = vec![Velocity::default(); n];
    let mut sensed = world.poses.clone();
    let mut near = Vec::with_capacity(n);
    let mut offsets = Vec::with_capacity(n);
    let mut trig = vec![(0.0, 1.0); n];

    for t in 0..cycles {
        for (tr, p) in trig.iter_mut().zip(&world.poses) {
            *tr = p.heading.sin_cos();
        }
        for i in 0..n {
            let proximity = proximity_into(&world, i, trig[i], &mut near);
            offsets_into(&world.poses, i, trig[i], &mut offsets);
            let mut frame = SensorFrame {
                proximity,
                rab: rab_from_offsets(&offsets, body.rab_range),
            };
            apply_sensor_fault(
                &mut frame,
                &mut offsets,
                body.rab_range,
                faults.get(i),
                &mut fault_rng,
            );
            frames[i] = frame;
        }
        for i in 0..n {
            let (l, r) = forward(genome, &mut states[i], &frames[i].network_inputs());
            let cmd = WheelCommand {
                left: (l * vmax).clamp(-vmax, vmax),
                right: (r * vmax).clamp(-vmax, vmax),
            };
            commands[i] = apply_actuator_fault(cmd, faults.get(i));
            velocities[i] = Velocity::from_command(commands[i], &body);
        }
        sensed.copy_from_slice(&world.poses);
        observer.observe(&CycleView {
            cycle: t,
            poses: &sensed,
            frames: &frames,
            commands: &commands,
            velocities: &velocities,
        });
        for i in 0..n {
            world.poses[i] = drive_with_trig(world.poses[i], velocities[i], trig[i], body.dt);
        }
        resolve_collisions(&mut world, &sensed);
    }
    Ok(world.arena)
}

/// Full-length (400 s) trial returning the complete log.
pub fn run_trial(
    env: &EnvironmentSpec,
    genome: &Genome,
    faults: &FaultAssignment,
    seed: u64,
) -> Result<TrialLog, SimError> {
    run_trial_cycles(env, genome, faults, seed, cycles_for(TRIAL_SECONDS))
}

pub fn run_trial_cycles(
    env: &EnvironmentSpec,
    genome: &Genome,
    faults: &FaultAssignment,
    seed: u64,
    cycles: usize,
) -> Result<TrialLog, SimError> {
    let body = RobotBody::for_environment(env);
    let mut log = TrialLog::new(ArenaSpec::empty(env.arena_side()), body, env.robots);
    let arena = simulate(env, genome, faults, seed, cycles, &mut log)?;
    log.arena = arena;
    Ok(log)
}
