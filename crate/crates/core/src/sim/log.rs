use std::io::{self, Write};

use super::{ArenaSpec, Pose, RobotBody, SensorFrame, Velocity, WheelCommand};

/// Everything that happened to the swarm in one control cycle. Poses are the
/// ones the robots sensed from; frames are what the controllers perceived
/// (after sensor faults); commands are the wheel speeds actually applied.
#[derive(Debug, Clone, Copy)]
pub struct CycleView<'a> {
    pub cycle: usize,
    pub poses: &'a [Pose],
    pub frames: &'a [SensorFrame],
    pub commands: &'a [WheelCommand],
    pub velocities: &'a [Velocity],
}

/// Receives every cycle of a trial as it is simulated.
pub trait TrialObserver {
    fn observe(&mut self, cycle: &CycleView<'_>);
}

impl<A: TrialObserver, B: TrialObserver> TrialObserver for (A, B) {
    fn observe(&mut self, cycle: &CycleView<'_>) {
        self.0.observe(cycle);
        self.1.observe(cycle);
    }
}

impl<T: TrialObserver + ?Sized> TrialObserver for &mut T {
    fn observe(&mut self, cycle: &CycleView<'_>) {
        (**self).observe(cycle);
    }
}

impl TrialObserver for () {
    fn observe(&mut self, _: &CycleView<'_>) {}
}

/// Complete per-cycle record of one trial, stored cycle-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialLog {
    pub arena: ArenaSpec,
    pub body: RobotBody,
    robots: usize,
    cycles: usize,
    poses: Vec<Pose>,
    frames: Vec<SensorFrame>,
    commands: Vec<WheelCommand>,
    velocities: Vec<Velocity>,
}

impl TrialLog {
    pub fn new(arena: ArenaSpec, body: RobotBody, robots: usize) -> Self {
        TrialLog {
            arena,
            body,
            robots,
            cycles: 0,
            poses: Vec::new(),
            frames: Vec::new(),
            commands: Vec::new(),
            velocities: Vec::new(),
        }
    }

    /// Builds a log from explicit per-cycle poses; sensors read idle and the
    /// commands are derived from `velocities`. Used to construct synthetic
    /// scenarios for the fitness and descriptor functions.
    pub fn from_poses(
        arena: ArenaSpec,
        body: RobotBody,
        poses: Vec<Vec<Pose>>,
        velocities: Vec<Vec<Velocity>>,
    ) -> Self {
        let robots = poses.first().map_or(0, Vec::len);
        let mut log = TrialLog::new(arena, body, robots);
        for (p, v) in poses.iter().zip(velocities.iter()) {
            assert_eq!(p.len(), robots);
            assert_eq!(v.len(), robots);
            let frames = vec![
                SensorFrame {
                    proximity: [0.0; 7],
                    rab: [1.0; 8],
                };
                robots
            ];
            let commands: Vec<WheelCommand> = v
                .iter()
                .map(|vel| {
                    let half = 0.5 * vel.angular * body.axle_length;
                    WheelCommand {
                        left: vel.linear - half,
                        right: vel.linear + half,
                    }
                })
                .collect();
            log.push(p, &frames, &commands, v);
        }
        log
    }

    pub fn push(
        &mut self,
        poses: &[Pose],
        frames: &[SensorFrame],
        commands: &[WheelCommand],
        velocities: &[Velocity],
    ) {
        debug_assert_eq!(poses.len(), self.robots);
        self.poses.extend_from_slice(poses);
        self.frames.extend_from_slice(frames);
        self.commands.extend_from_slice(commands);
        self.velocities.extend_from_slice(velocities);
        self.cycles += 1;
    }

    pub fn robots(&self) -> usize {
        self.robots
    }

    pub fn cycles(&self) -> usize {
        self.cycles
    }

    fn span(&self, t: usize) -> std::ops::Range<usize> {
        t * self.robots..(t + 1) * self.robots
    }

    pub fn poses(&self, t: usize) -> &[Pose] {
        &self.poses[self.span(t)]
    }

    pub fn frames(&self, t: usize) -> &[SensorFrame] {
        &self.frames[self.span(t)]
    }

    pub fn commands(&self, t: usize) -> &[WheelCommand] {
        &self.commands[self.span(t)]
    }

    pub fn velocities(&self, t: usize) -> &[Velocity] {
        &self.velocities[self.span(t)]
    }

    pub fn cycle(&self, t: usize) -> CycleView<'_> {
        CycleView {
            cycle: t,
            poses: self.poses(t),
            frames: self.frames(t),
            commands: self.commands(t),
            velocities: self.velocities(t),
        }
    }

    /// Feeds every recorded cycle to `observer`, in order.
    pub fn replay<O: TrialObserver + ?Sized>(&self, observer: &mut O) {
        for t in 0..self.cycles {
            observer.observe(&self.cycle(t));
        }
    }

    /// Debug export: `cycle,robot,x,y,heading,vl,vr`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "cycle,robot,x,y,heading,vl,vr")?;
        for t in 0..self.cycles {
            for (r, (p, c)) in self.poses(t).iter().zip(self.commands(t)).enumerate() {
                writeln!(
                    out,
                    "{t},{r},{},{},{},{},{}",
                    p.x, p.y, p.heading, c.left, c.right
                )?;
            }
        }
        Ok(())
    }
}

impl TrialObserver for TrialLog {
    fn observe(&mut self, c: &CycleView<'_>) {
        self.push(c.poses, c.frames, c.commands, c.velocities);
    }
}
