use crate::sim::{CycleView, SensorFrame, TrialLog, TrialObserver, WheelCommand};

pub const SPIRIT_STATES: usize = 64;
pub const SPIRIT_ACTIONS: usize = 16;
pub const SPIRIT_DIM: usize = SPIRIT_STATES * SPIRIT_ACTIONS;
/// Wheel speed bins per wheel.
pub const WHEEL_BINS: usize = 4;

/// Proximity sensors making up each state bit, in bit order: front-left,
/// front-centre, front-right, rear.
const PROXIMITY_GROUPS: [&[usize]; 4] = [&[0, 1], &[2], &[3, 4], &[5, 6]];
/// Range-and-bearing cones of the front and rear bits.
const RAB_FRONT: [usize; 4] = [0, 1, 6, 7];
const RAB_REAR: [usize; 4] = [2, 3, 4, 5];

/// 6-bit sensory state. A proximity bit is set when a member reads above
/// 0.5; a range-and-bearing bit when a neighbour sits within half range.
pub fn state_of(frame: &SensorFrame) -> usize {
    let mut s = 0;
    for (bit, group) in PROXIMITY_GROUPS.iter().enumerate() {
        if group.iter().any(|&k| frame.proximity[k] > 0.5) {
            s |= 1 << bit;
        }
    }
    if RAB_FRONT.iter().any(|&k| frame.rab[k] < 0.5) {
        s |= 1 << 4;
    }
    if RAB_REAR.iter().any(|&k| frame.rab[k] < 0.5) {
        s |= 1 << 5;
    }
    s
}

fn wheel_bin(v: f64, vmax: f64) -> usize {
    let u = (v + vmax) / (2.0 * vmax) * WHEEL_BINS as f64;
    (u.floor().max(0.0) as usize).min(WHEEL_BINS - 1)
}

/// Action index `left_bin * 4 + right_bin`, bins of equal width over
/// `[-vmax, vmax]`.
pub fn action_of(cmd: &WheelCommand, vmax: f64) -> usize {
    wheel_bin(cmd.left, vmax) * WHEEL_BINS + wheel_bin(cmd.right, vmax)
}

/// State-action counts over all robots, cycles and trials.
#[derive(Debug, Clone)]
pub struct SpiritCounts {
    max_speed: f64,
    counts: Vec<u64>,
}

impl SpiritCounts {
    pub fn new(max_speed: f64) -> Self {
        SpiritCounts {
            max_speed,
            counts: vec![0; SPIRIT_DIM],
        }
    }

    /// Bins subsequently observed actions against `max_speed`.
    pub fn set_speed(&mut self, max_speed: f64) {
        self.max_speed = max_speed;
    }

    pub fn add(&mut self, state: usize, action: usize) {
        self.counts[state * SPIRIT_ACTIONS + action] += 1;
    }

    /// Conditional action distributions, one 16-block per state. Unvisited
    /// states get the uniform distribution.
    pub fn descriptor(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(SPIRIT_DIM);
        for block in self.counts.chunks(SPIRIT_ACTIONS) {
            let total: u64 = block.iter().sum();
            if total == 0 {
                out.extend(std::iter::repeat_n(
                    1.0 / SPIRIT_ACTIONS as f64,
                    SPIRIT_ACTIONS,
                ));
            } else {
                out.extend(block.iter().map(|&c| c as f64 / total as f64));
            }
        }
        out
    }
}

impl TrialObserver for SpiritCounts {
    fn observe(&mut self, c: &CycleView<'_>) {
        for (f, cmd) in c.frames.iter().zip(c.commands) {
            self.add(state_of(f), action_of(cmd, self.max_speed));
        }
    }
}

pub fn compute_spirit(logs: &[TrialLog]) -> Vec<f64> {
    let mut counts = SpiritCounts::new(logs.first().map_or(1.0, |l| l.body.max_linear_speed));
    for log in logs {
        counts.set_speed(log.body.max_linear_speed);
        log.replay(&mut counts);
    }
    counts.descriptor()
}
