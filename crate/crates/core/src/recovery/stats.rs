//! Nonparametric tests, effect sizes, regression and kernel density.

use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("both samples must be non-empty")]
    EmptySample,
    #[error("x has zero variance; slope is undefined")]
    DegenerateX,
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("{axis} has zero variance; bandwidth is undefined")]
    DegenerateBandwidth { axis: &'static str },
}

/// Largest combined sample size for which the exact distribution is used.
pub const EXACT_LIMIT: usize = 12;

/// Midranks of the pooled sample, doubled so they stay integral.
fn doubled_midranks(pooled: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0u64; pooled.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share (i + j + 2) / 2
        for &k in &order[i..=j] {
            ranks[k] = (i + j + 2) as u64;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided Wilcoxon rank-sum p-value. Exact (midrank permutation
/// distribution) for `x.len() + y.len() <= 12`, otherwise the normal
/// approximation with tie and continuity correction.
pub fn wilcoxon_rank_sum(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.is_empty() || y.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    if pooled.iter().all(|&v| v == pooled[0]) {
        return Ok(1.0);
    }
    let (n, m) = (x.len(), y.len());
    let big_n = n + m;
    let ranks = doubled_midranks(&pooled);
    let observed: u64 = ranks[..n].iter().sum();
    // doubled expectation: n (N + 1)
    let expected2 = (n * (big_n + 1)) as i64;
    if big_n <= EXACT_LIMIT {
        // subset-sum counts over doubled ranks: ways[k][s]
        let max_sum: usize = ranks.iter().sum::<u64>() as usize;
        let mut ways = vec![vec![0u64; max_sum + 1]; n + 1];
        ways[0][0] = 1;
        for &r in &ranks {
            let r = r as usize;
            for k in (1..=n).rev() {
                for s in (r..=max_sum).rev() {
                    ways[k][s] += ways[k - 1][s - r];
                }
            }
        }
        let obs_dev = (observed as i64 - expected2).abs();
        let (mut extreme, mut total) = (0u64, 0u64);
        for (s, &w) in ways[n].iter().enumerate() {
            total += w;
            if (s as i64 - expected2).abs() >= obs_dev {
                extreme += w;
            }
        }
        return Ok((extreme as f64 / total as f64).min(1.0));
    }
    let (nf, mf, bn) = (n as f64, m as f64, big_n as f64);
    let w = observed as f64 / 2.0;
    let mean = nf * (bn + 1.0) / 2.0;
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_sum += t * t * t - t;
        i = j + 1;
    }
    let var = nf * mf / 12.0 * ((bn + 1.0) - tie_sum / (bn * (bn - 1.0)));
    let z = ((w - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok((2.0 * (1.0 - normal.cdf(z))).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Magnitude {
    Negligible,
    Small,
    Medium,
    Large,
}

impl Magnitude {
    pub fn of(delta: f64) -> Self {
        let d = delta.abs();
        if d < 0.11 {
            Magnitude::Negligible
        } else if d < 0.28 {
            Magnitude::Small
        } else if d < 0.43 {
            Magnitude::Medium
        } else {
            Magnitude::Large
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Magnitude::Negligible => "negligible",
            Magnitude::Small => "small",
            Magnitude::Medium => "medium",
            Magnitude::Large => "large",
        }
    }
}

/// Cliff's delta via sorted counting.
pub fn cliffs_delta(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.is_empty() || y.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let mut ys = y.to_vec();
    ys.sort_by(f64::total_cmp);
    let mut net: i64 = 0;
    for &v in x {
        let below = ys.partition_point(|&w| w < v) as i64;
        let not_above = ys.partition_point(|&w| w <= v) as i64;
        let above = ys.len() as i64 - not_above;
        net += below - above;
    }
    Ok(net as f64 / (x.len() * y.len()) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatResult {
    pub p_value: f64,
    pub delta: f64,
    pub magnitude: Magnitude,
}

pub fn compare(x: &[f64], y: &[f64]) -> Result<StatResult, StatsError> {
    let delta = cliffs_delta(x, y)?;
    Ok(StatResult {
        p_value: wilcoxon_rank_sum(x, y)?,
        delta,
        magnitude: Magnitude::of(delta),
    })
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub correlation: f64,
}

/// Ordinary least squares of `y` on `x` with Pearson correlation. A
/// constant `y` gives slope 0 and correlation 0.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit, StatsError> {
    assert_eq!(x.len(), y.len());
    if x.len() < 2 {
        return Err(StatsError::TooFewPoints {
            needed: 2,
            got: x.len(),
        });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    if sxx == 0.0 {
        return Err(StatsError::DegenerateX);
    }
    if syy == 0.0 {
        return Ok(LinearFit {
            slope: 0.0,
            intercept: my,
            correlation: 0.0,
        });
    }
    let slope = sxy / sxx;
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        correlation: (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0),
    })
}

pub const KDE_GRID: usize = 100;
/// Grid margin beyond the data range, in bandwidths.
const KDE_MARGIN: f64 = 3.0;

/// Gaussian density on a regular grid; `density[j * KDE_GRID + i]` is the
/// value at `(xs[i], ys[j])`.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub bandwidth: (f64, f64),
    pub density: Vec<f64>,
}

impl KdeGrid {
    /// Riemann sum of the density over the grid.
    pub fn integral(&self) -> f64 {
        let dx = self.xs[1] - self.xs[0];
        let dy = self.ys[1] - self.ys[0];
        self.density.iter().sum::<f64>() * dx * dy
    }
}

fn sample_sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// 2-d Gaussian KDE with Scott's bandwidth `n^(-1/6)` times each axis'
/// sample standard deviation.
pub fn kde_2d(x: &[f64], y: &[f64]) -> Result<KdeGrid, StatsError> {
    assert_eq!(x.len(), y.len());
    if x.len() < 2 {
        return Err(StatsError::TooFewPoints {
            needed: 2,
            got: x.len(),
        });
    }
    let factor = (x.len() as f64).powf(-1.0 / 6.0);
    let hx = factor * sample_sd(x);
    let hy = factor * sample_sd(y);
    if hx == 0.0 {
        return Err(StatsError::DegenerateBandwidth { axis: "x" });
    }
    if hy == 0.0 {
        return Err(StatsError::DegenerateBandwidth { axis: "y" });
    }
    let axis = |v: &[f64], h: f64| -> Vec<f64> {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min) - KDE_MARGIN * h;
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max) + KDE_MARGIN * h;
        (0..KDE_GRID)
            .map(|i| lo + (hi - lo) * i as f64 / (KDE_GRID - 1) as f64)
            .collect()
    };
    let xs = axis(x, hx);
    let ys = axis(y, hy);
    let norm = 1.0 / (x.len() as f64 * 2.0 * std::f64::consts::PI * hx * hy);
    let mut density = vec![0.0; KDE_GRID * KDE_GRID];
    for (j, &gy) in ys.iter().enumerate() {
        for (i, &gx) in xs.iter().enumerate() {
            let s: f64 = x
                .iter()
                .zip(y)
                .map(|(a, b)| {
                    let u = (gx - a) / hx;
                    let v = (gy - b) / hy;
                    (-0.5 * (u * u + v * v)).exp()
                })
                .sum();
            density[j * KDE_GRID + i] = s * norm;
        }
    }
    Ok(KdeGrid {
        xs,
        ys,
        bandwidth: (hx, hy),
        density,
    })
}
