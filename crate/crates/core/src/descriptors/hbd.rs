use crate::sim::{CycleView, TrialLog, TrialObserver};

/// Visitation grid cell side, the robot's body length (m).
pub const HBD_CELL: f64 = 0.11;

/// Per-trial hand-coded features: visitation entropy, distance to centre
/// and visited fraction.
#[derive(Debug, Clone)]
pub struct HbdTrial {
    side: f64,
    per_side: usize,
    counts: Vec<u64>,
    distance_sum: f64,
    samples: u64,
}

impl HbdTrial {
    pub fn new(side: f64) -> Self {
        let per_side = (side / HBD_CELL).ceil() as usize;
        HbdTrial {
            side,
            per_side,
            counts: vec![0; per_side * per_side],
            distance_sum: 0.0,
            samples: 0,
        }
    }

    pub fn cells(&self) -> usize {
        self.counts.len()
    }

    pub fn cell_of(&self, x: f64, y: f64) -> usize {
        let f = |v: f64| ((v / HBD_CELL).floor().max(0.0) as usize).min(self.per_side - 1);
        f(y) * self.per_side + f(x)
    }

    /// Adds `weight` visits to a cell directly.
    pub fn add_visits(&mut self, cell: usize, weight: u64) {
        self.counts[cell] += weight;
    }

    pub fn features(&self) -> [f64; 3] {
        let total: u64 = self.counts.iter().sum();
        if total == 0 {
            return [0.0; 3];
        }
        let entropy: f64 = self
            .counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / total as f64;
                -p * p.ln()
            })
            .sum();
        let cells = self.cells() as f64;
        let uniformity = (entropy / cells.ln()).clamp(0.0, 1.0);
        let distance = if self.samples == 0 {
            0.0
        } else {
            let half_diagonal = self.side * std::f64::consts::SQRT_2 / 2.0;
            (self.distance_sum / self.samples as f64 / half_diagonal).min(1.0)
        };
        let visited = self.counts.iter().filter(|&&c| c > 0).count() as f64 / cells;
        [uniformity, distance, visited]
    }
}

impl TrialObserver for HbdTrial {
    fn observe(&mut self, c: &CycleView<'_>) {
        let centre = self.side / 2.0;
        for p in c.poses {
            let k = self.cell_of(p.x, p.y);
            self.counts[k] += 1;
            self.distance_sum += (p.x - centre).hypot(p.y - centre);
            self.samples += 1;
        }
    }
}

/// Feature-wise mean over trials.
pub fn combine_hbd(trials: &[[f64; 3]]) -> [f64; 3] {
    let mut out = [0.0; 3];
    if trials.is_empty() {
        return out;
    }
    for t in trials {
        for (o, v) in out.iter_mut().zip(t) {
            *o += v;
        }
    }
    out.map(|v| v / trials.len() as f64)
}

pub fn compute_hbd(logs: &[TrialLog]) -> [f64; 3] {
    let per_trial: Vec<[f64; 3]> = logs
        .iter()
        .map(|log| {
            let mut t = HbdTrial::new(log.arena.side_length);
            log.replay(&mut t);
            t.features()
        })
        .collect();
    combine_hbd(&per_trial)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{ArenaSpec, Pose, RobotBody, Velocity};

    fn still(poses: Vec<Pose>, cycles: usize) -> TrialLog {
        let n = poses.len();
        TrialLog::from_poses(
            ArenaSpec::empty(4.0),
            RobotBody::normal(),
            vec![poses; cycles],
            vec![vec![Velocity::default(); n]; cycles],
        )
    }

    #[test]
    fn pinned_at_centre() {
        let log = still(vec![Pose::new(2.0, 2.0, 0.0); 10], 20);
        let f = compute_hbd(&[log]);
        let cells = (4.0f64 / HBD_CELL).ceil().powi(2);
        assert_eq!(f[0], 0.0);
        assert_eq!(f[1], 0.0);
        assert!((f[2] - 1.0 / cells).abs() < 1e-15);
    }

    #[test]
    fn uniform_visitation_has_full_uniformity() {
        let mut t = HbdTrial::new(2.0);
        for k in 0..t.cells() {
            t.add_visits(k, 3);
        }
        let f = t.features();
        assert!((f[0] - 1.0).abs() < 1e-12);
        assert_eq!(f[2], 1.0);
    }

    #[test]
    fn identical_trials_average_to_one() {
        let log = still(vec![Pose::new(0.5, 1.0, 0.0), Pose::new(3.0, 3.5, 0.0)], 5);
        assert_eq!(
            compute_hbd(&[log.clone(), log.clone()]),
            compute_hbd(&[log])
        );
    }

    #[test]
    fn corner_robot_is_at_unit_distance() {
        let f = compute_hbd(&[still(vec![Pose::new(0.0, 0.0, 0.0)], 3)]);
        assert!((f[1] - 1.0).abs() < 1e-12);
    }
}
