use thiserror::Error;

use crate::sim::{CycleView, TrialLog, TrialObserver};

pub const SDBC_FEATURES: usize = 5;
pub const SDBC_DIM: usize = 2 * SDBC_FEATURES;

pub const MEDIAN_TOLERANCE: f64 = 1e-9;
pub const MEDIAN_MAX_ITERATIONS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DescriptorError {
    #[error("pair features need at least 2 robots, got {0}")]
    TooFewRobots(usize),
    #[error("descriptor needs at least one trial")]
    NoTrials,
}

/// Running mean and population variance.
#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn sd(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.m2 / self.n as f64).max(0.0).sqrt()
        }
    }
}

/// Per-trial SDBC statistics. Per cycle, five swarm-averaged features:
/// |linear velocity| / vmax, |angular velocity| / wmax, distance to the
/// nearest wall / M, all-pairs distance / M, nearest-neighbour distance / M.
#[derive(Debug, Clone)]
pub struct SdbcTrial {
    side: f64,
    max_linear: f64,
    max_angular: f64,
    stats: [Welford; SDBC_FEATURES],
    robots: usize,
}

impl SdbcTrial {
    pub fn new(side: f64, max_linear: f64, max_angular: f64) -> Self {
        SdbcTrial {
            side,
            max_linear,
            max_angular,
            stats: [Welford::default(); SDBC_FEATURES],
            robots: usize::MAX,
        }
    }

    /// `[means..., standard deviations...]`, each in `[0, 1]`.
    pub fn features(&self) -> Result<[f64; SDBC_DIM], DescriptorError> {
        if self.robots < 2 {
            return Err(DescriptorError::TooFewRobots(self.robots));
        }
        let mut out = [0.0; SDBC_DIM];
        for (k, s) in self.stats.iter().enumerate() {
            out[k] = s.mean.clamp(0.0, 1.0);
            out[SDBC_FEATURES + k] = s.sd().clamp(0.0, 1.0);
        }
        Ok(out)
    }
}

impl TrialObserver for SdbcTrial {
    fn observe(&mut self, c: &CycleView<'_>) {
        let n = c.poses.len();
        self.robots = self.robots.min(n);
        if n < 2 {
            return;
        }
        let nf = n as f64;
        let diagonal = self.side * std::f64::consts::SQRT_2;
        let linear =
            c.velocities.iter().map(|v| v.linear.abs()).sum::<f64>() / nf / self.max_linear;
        let angular =
            c.velocities.iter().map(|v| v.angular.abs()).sum::<f64>() / nf / self.max_angular;
        let wall = c
            .poses
            .iter()
            .map(|p| {
                p.x.min(p.y)
                    .min(self.side - p.x)
                    .min(self.side - p.y)
                    .max(0.0)
            })
            .sum::<f64>()
            / nf
            / diagonal;
        let mut nearest = vec![f64::INFINITY; n];
        let mut pair_sum = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let d = c.poses[i].distance(&c.poses[j]);
                pair_sum += d;
                nearest[i] = nearest[i].min(d);
                nearest[j] = nearest[j].min(d);
            }
        }
        let pairs = pair_sum / (nf * (nf - 1.0) / 2.0) / diagonal;
        let nn = nearest.iter().sum::<f64>() / nf / diagonal;
        for (s, v) in self
            .stats
            .iter_mut()
            .zip([linear, angular, wall, pairs, nn])
        {
            s.push(v);
        }
    }
}

/// Geometric median by Weiszfeld iteration with the Vardi-Zhang step when
/// the estimate lands on a data point. Starts from the centroid.
pub fn geometric_median(points: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = points.first() else {
        return Vec::new();
    };
    if points.len() == 1 {
        return first.clone();
    }
    let dim = first.len();
    let mut y: Vec<f64> = (0..dim)
        .map(|k| points.iter().map(|p| p[k]).sum::<f64>() / points.len() as f64)
        .collect();
    for _ in 0..MEDIAN_MAX_ITERATIONS {
        let mut num = vec![0.0; dim];
        let mut denom = 0.0;
        let mut coincident = 0usize;
        let mut pull = vec![0.0; dim];
        for p in points {
            let d = dist(p, &y);
            if d <= f64::EPSILON * (1.0 + norm(&y)) {
                coincident += 1;
                continue;
            }
            for k in 0..dim {
                num[k] += p[k] / d;
                pull[k] += (p[k] - y[k]) / d;
            }
            denom += 1.0 / d;
        }
        if denom == 0.0 {
            break;
        }
        let t: Vec<f64> = num.iter().map(|v| v / denom).collect();
        let next = if coincident == 0 {
            t
        } else {
            let r = norm(&pull);
            if r <= coincident as f64 {
                // the data point itself is optimal
                break;
            }
            let w = coincident as f64 / r;
            t.iter()
                .zip(&y)
                .map(|(ti, yi)| (1.0 - w) * ti + w * yi)
                .collect()
        };
        let step = dist(&next, &y);
        y = next;
        if step < MEDIAN_TOLERANCE {
            break;
        }
    }
    y
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Sum of distances from `y` to every point.
pub fn distance_sum(points: &[Vec<f64>], y: &[f64]) -> f64 {
    points.iter().map(|p| dist(p, y)).sum()
}

pub fn combine_sdbc(trials: &[[f64; SDBC_DIM]]) -> Result<[f64; SDBC_DIM], DescriptorError> {
    if trials.is_empty() {
        return Err(DescriptorError::NoTrials);
    }
    let points: Vec<Vec<f64>> = trials.iter().map(|t| t.to_vec()).collect();
    let m = geometric_median(&points);
    Ok(std::array::from_fn(|k| m[k].clamp(0.0, 1.0)))
}

pub fn compute_sdbc(logs: &[TrialLog]) -> Result<[f64; SDBC_DIM], DescriptorError> {
    let per_trial = logs
        .iter()
        .map(|log| {
            let mut t = SdbcTrial::new(
                log.arena.side_length,
                log.body.max_linear_speed,
                log.body.max_angular_speed,
            );
            log.replay(&mut t);
            t.features()
        })
        .collect::<Result<Vec<_>, _>>()?;
    combine_sdbc(&per_trial)
}
