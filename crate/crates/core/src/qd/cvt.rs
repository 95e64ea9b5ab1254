use std::io::{self, BufRead, Write};

use rand::distr::{Distribution, Uniform};
use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use thiserror::Error;

use crate::seed::{label, rng_for};

#[derive(Debug, Error)]
pub enum CvtError {
    #[error("cannot place {k} centroids among {seeds} seed points")]
    TooFewSeeds { k: usize, seeds: usize },
    #[error("centroid file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Row-major set of centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct Centroids {
    dim: usize,
    data: Vec<f64>,
}

impl Centroids {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == dim), "ragged centroid rows");
        Centroids {
            dim,
            data: rows.concat(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.dim.max(1))
    }

    /// Index of the Euclidean-nearest centroid, lowest index on ties.
    pub fn nearest(&self, x: &[f64]) -> usize {
        debug_assert_eq!(x.len(), self.dim);
        let mut best = (f64::INFINITY, 0);
        for (i, c) in self.iter().enumerate() {
            let d: f64 = c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    /// Header `x0,..`, then one centroid per line in shortest round-trip
    /// float form.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let header: Vec<String> = (0..self.dim).map(|j| format!("x{j}")).collect();
        writeln!(out, "{}", header.join(","))?;
        for c in self.iter() {
            let row: Vec<String> = c.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Reads rows written by [`Centroids::write_csv`]; `#` lines are skipped.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, CvtError> {
        let mut rows = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with('x') {
                continue;
            }
            let row = line
                .split(',')
                .map(|v| v.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CvtError::Format(format!("line {}: {e}", n + 1)))?;
            if rows
                .first()
                .is_some_and(|r: &Vec<f64>| r.len() != row.len())
            {
                return Err(CvtError::Format(format!(
                    "line {}: wrong number of columns",
                    n + 1
                )));
            }
            rows.push(row);
        }
        Ok(Centroids::from_rows(&rows))
    }
}

/// CVT construction settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvtParams {
    pub k: usize,
    pub dim: usize,
    pub seeds: usize,
    pub max_iterations: usize,
    /// Stop once no centroid moves farther than this.
    pub tolerance: f64,
    /// Draw each consecutive block of this many coordinates on the
    /// probability simplex instead of the unit cube.
    pub simplex_block: Option<usize>,
}

/// Seed cloud: uniform on `[0, 1]^dim`, or blockwise uniform on the simplex
/// (normalised unit exponentials).
pub fn sample_seeds<R: Rng + ?Sized>(
    n: usize,
    dim: usize,
    simplex_block: Option<usize>,
    rng: &mut R,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * dim);
    match simplex_block {
        None => {
            let u = Uniform::new(0.0, 1.0).expect("valid range");
            out.extend((0..n * dim).map(|_| u.sample(rng)));
        }
        Some(b) => {
            assert!(
                b > 0 && dim.is_multiple_of(b),
                "block size must divide the dimension"
            );
            for _ in 0..n * dim / b {
                let block: Vec<f64> = (0..b).map(|_| Exp1.sample(rng)).collect();
                let total: f64 = block.iter().sum();
                out.extend(block.iter().map(|e| e / total));
            }
        }
    }
    out
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding followed by Lloyd iterations over row-major `points`.
pub fn kmeans<R: Rng + ?Sized>(
    points: &[f64],
    dim: usize,
    k: usize,
    max_iterations: usize,
    tolerance: f64,
    rng: &mut R,
) -> Result<Centroids, CvtError> {
    let n = points.len() / dim;
    if k > n || k == 0 {
        return Err(CvtError::TooFewSeeds { k, seeds: n });
    }
    let point = |i: usize| &points[i * dim..(i + 1) * dim];

    let mut centres: Vec<f64> = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centres.extend_from_slice(point(first));
    let mut d2: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| sq_dist(point(i), point(first)))
        .collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = point(pick).to_vec();
        d2.par_iter_mut().enumerate().for_each(|(i, d)| {
            *d = d.min(sq_dist(point(i), &c));
        });
        centres.extend_from_slice(&c);
    }

    let mut centroids = Centroids { dim, data: centres };
    for _ in 0..max_iterations {
        let labels: Vec<usize> = (0..n)
            .into_par_iter()
            .map(|i| centroids.nearest(point(i)))
            .collect();
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (s, v) in sums[l * dim..(l + 1) * dim].iter_mut().zip(point(i)) {
                *s += v;
            }
        }
        let mut shift = 0.0f64;
        for j in 0..k {
            if counts[j] == 0 {
                continue;
            }
            let mean: Vec<f64> = sums[j * dim..(j + 1) * dim]
                .iter()
                .map(|s| s / counts[j] as f64)
                .collect();
            shift = shift.max(sq_dist(&mean, centroids.get(j)).sqrt());
            centroids.data[j * dim..(j + 1) * dim].copy_from_slice(&mean);
        }
        if shift < tolerance {
            break;
        }
    }
    Ok(centroids)
}

/// Samples the seed cloud and runs k-means, all driven by `seed`.
pub fn generate_cvt_centroids(params: &CvtParams, seed: u64) -> Result<Centroids, CvtError> {
    if params.k > params.seeds {
        return Err(CvtError::TooFewSeeds {
            k: params.k,
            seeds: params.seeds,
        });
    }
    let points = sample_seeds(
        params.seeds,
        params.dim,
        params.simplex_block,
        &mut rng_for(seed, &[label("cvt-seeds")]),
    );
    kmeans(
        &points,
        params.dim,
        params.k,
        params.max_iterations,
        params.tolerance,
        &mut rng_for(seed, &[label("cvt-init")]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::Normal;

    #[test]
    fn single_cluster_is_the_mean() {
        let pts = vec![0.0, 0.0, 2.0, 0.0, 1.0, 3.0];
        let c = kmeans(&pts, 2, 1, 50, 1e-12, &mut rng_for(1, &[])).unwrap();
        assert!((c.get(0)[0] - 1.0).abs() < 1e-12 && (c.get(0)[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn separated_blobs_are_recovered() {
        let means = [(0.0, 0.0), (5.0, 0.0), (0.0, 5.0), (5.0, 5.0)];
        let mut rng = rng_for(3, &[]);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let mut pts = Vec::new();
        for _ in 0..200 {
            for &(mx, my) in &means {
                pts.push(mx + noise.sample(&mut rng));
                pts.push(my + noise.sample(&mut rng));
            }
        }
        let c = kmeans(&pts, 2, 4, 100, 1e-9, &mut rng).unwrap();
        for &(mx, my) in &means {
            let best = c
                .iter()
                .map(|p| ((p[0] - mx).powi(2) + (p[1] - my).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(best < 0.05, "blob ({mx}, {my}) off by {best}");
        }
    }

    #[test]
    fn simplex_seeds_sum_to_one() {
        let s = sample_seeds(50, 64, Some(16), &mut rng_for(5, &[]));
        for block in s.chunks(16) {
            assert!((block.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(block.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn too_many_centroids_is_an_error() {
        let p = CvtParams {
            k: 10,
            dim: 2,
            seeds: 5,
            max_iterations: 1,
            tolerance: 0.0,
            simplex_block: None,
        };
        assert!(matches!(
            generate_cvt_centroids(&p, 0),
            Err(CvtError::TooFewSeeds { k: 10, seeds: 5 })
        ));
    }

    #[test]
    fn nearest_breaks_ties_low() {
        let mut rows = vec![vec![10.0, 10.0]; 8];
        rows[2] = vec![0.0, 0.0];
        rows[7] = vec![2.0, 0.0];
        let c = Centroids::from_rows(&rows);
        assert_eq!(c.nearest(&[1.0, 0.0]), 2);
        assert_eq!(c.nearest(&[2.0, 0.0]), 7);
    }

    #[test]
    fn csv_round_trip() {
        let c = generate_cvt_centroids(
            &CvtParams {
                k: 8,
                dim: 3,
                seeds: 100,
                max_iterations: 5,
                tolerance: 1e-6,
                simplex_block: None,
            },
            11,
        )
        .unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert_eq!(Centroids::read_csv(&buf[..]).unwrap(), c);
    }
}
