use std::collections::BTreeMap;

use crate::descriptors::{SPIRIT_ACTIONS, SPIRIT_STATES};
use crate::qd::Centroids;

/// Mean total-variation distance between the 64 conditional action
/// distributions of two SPIRIT descriptors.
pub fn spirit_distance(p1: &[f64], p2: &[f64]) -> f64 {
    debug_assert_eq!(p1.len(), SPIRIT_STATES * SPIRIT_ACTIONS);
    debug_assert_eq!(p2.len(), p1.len());
    let l1: f64 = p1.iter().zip(p2).map(|(a, b)| (a - b).abs()).sum();
    l1 / (2.0 * SPIRIT_STATES as f64)
}

/// One elite re-described in the common SPIRIT space.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedElite {
    pub key: usize,
    pub performance: f64,
    pub descriptor: Vec<f64>,
}

/// Elites binned by nearest SPIRIT centroid, best performer per centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedMap {
    /// centroid id -> (original cell key, performance)
    pub cells: BTreeMap<usize, (usize, f64)>,
    pub diversity: f64,
}

impl ProjectedMap {
    pub fn coverage(&self) -> usize {
        self.cells.len()
    }
}

/// Mean pairwise [`spirit_distance`]; 0 with fewer than two points.
pub fn mean_pairwise_distance(points: &[&[f64]]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += spirit_distance(points[i], points[j]);
        }
    }
    total / (n * (n - 1) / 2) as f64
}

/// Bins projected elites; ties on performance keep the earlier elite.
/// Diversity is the mean pairwise distance between the filled centroids.
pub fn project_archive(elites: &[ProjectedElite], centroids: &Centroids) -> ProjectedMap {
    let mut cells: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    for e in elites {
        let c = centroids.nearest(&e.descriptor);
        match cells.get(&c) {
            Some(&(_, p)) if e.performance <= p => {}
            _ => {
                cells.insert(c, (e.key, e.performance));
            }
        }
    }
    let points: Vec<&[f64]> = cells.keys().map(|&c| centroids.get(c)).collect();
    ProjectedMap {
        diversity: mean_pairwise_distance(&points),
        cells,
    }
}
