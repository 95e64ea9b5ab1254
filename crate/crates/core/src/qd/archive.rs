use std::collections::BTreeMap;

use super::cvt::Centroids;
use crate::descriptors::EnvDescriptor;
use crate::env::EnvironmentSpec;
use crate::genome::Genome;

/// Capacity shared by every archive layout.
pub const ARCHIVE_CELLS: usize = 4096;
/// Bins per dimension of the hand-coded descriptor grid.
pub const HBD_BINS: usize = 16;

/// One archived solution and the evaluation that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Elite {
    pub genome: Genome,
    pub performance: f64,
    pub descriptor: Vec<f64>,
    pub environment: EnvironmentSpec,
    /// Evaluation counter; trial seeds derive from it.
    pub eval_id: u64,
}

/// Maps an evaluated solution onto a cell key.
#[derive(Debug, Clone, PartialEq)]
pub enum CellIndexer {
    /// Regular grid over `[0, 1]^dims`.
    Grid {
        bins: usize,
        dims: usize,
    },
    Cvt(Centroids),
    /// Key from the environment the solution was evaluated in.
    Environment,
}

impl CellIndexer {
    pub fn hbd() -> Self {
        CellIndexer::Grid {
            bins: HBD_BINS,
            dims: 3,
        }
    }

    pub fn capacity(&self) -> usize {
        match self {
            CellIndexer::Grid { bins, dims } => bins.pow(*dims as u32),
            CellIndexer::Cvt(c) => c.len(),
            CellIndexer::Environment => crate::descriptors::ENV_CELLS,
        }
    }

    /// Cell of a grid or CVT descriptor. `None` for the environment layout
    /// or a descriptor of the wrong dimension.
    pub fn key_of_descriptor(&self, d: &[f64]) -> Option<usize> {
        match self {
            CellIndexer::Grid { bins, dims } => {
                if d.len() != *dims {
                    return None;
                }
                Some(d.iter().fold(0, |key, &v| {
                    let b = ((v * *bins as f64).floor().max(0.0) as usize).min(bins - 1);
                    key * bins + b
                }))
            }
            CellIndexer::Cvt(c) => (d.len() == c.dim()).then(|| c.nearest(d)),
            CellIndexer::Environment => None,
        }
    }

    pub fn key_of(&self, elite: &Elite) -> Option<usize> {
        match self {
            CellIndexer::Environment => EnvDescriptor::of(&elite.environment).ok().map(|d| d.key()),
            _ => self.key_of_descriptor(&elite.descriptor),
        }
    }
}

/// At most one elite per cell; iteration is in key order.
#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    pub indexer: CellIndexer,
    cells: BTreeMap<usize, Elite>,
}

impl Archive {
    pub fn new(indexer: CellIndexer) -> Self {
        Archive {
            indexer,
            cells: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn coverage(&self) -> usize {
        self.cells.len()
    }

    pub fn get(&self, key: usize) -> Option<&Elite> {
        self.cells.get(&key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Elite)> {
        self.cells.iter().map(|(&k, e)| (k, e))
    }

    pub fn keys(&self) -> Vec<usize> {
        self.cells.keys().copied().collect()
    }

    /// Inserts into `key` if empty or on strict improvement.
    pub fn try_insert_at(&mut self, key: usize, elite: Elite) -> bool {
        match self.cells.get(&key) {
            Some(inc)
                if elite.performance.partial_cmp(&inc.performance)
                    != Some(std::cmp::Ordering::Greater) =>
            {
                false
            }
            _ => {
                self.cells.insert(key, elite);
                true
            }
        }
    }

    /// Routes `elite` through the indexer. Returns the key and whether it
    /// was accepted, or `None` when it has no cell.
    pub fn try_insert(&mut self, elite: Elite) -> Option<(usize, bool)> {
        let key = self.indexer.key_of(&elite)?;
        if key >= self.indexer.capacity() {
            return None;
        }
        Some((key, self.try_insert_at(key, elite)))
    }

    pub fn best(&self) -> Option<(usize, &Elite)> {
        let mut best: Option<(usize, &Elite)> = None;
        for (k, e) in self.iter() {
            if best.is_none_or(|(_, b)| e.performance > b.performance) {
                best = Some((k, e));
            }
        }
        best
    }

    pub fn mean_performance(&self) -> f64 {
        if self.cells.is_empty() {
            return 0.0;
        }
        self.cells.values().map(|e| e.performance).sum::<f64>() / self.cells.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn elite(p: f64, d: Vec<f64>) -> Elite {
        Elite {
            genome: Genome::empty(),
            performance: p,
            descriptor: d,
            environment: EnvironmentSpec::NORMAL,
            eval_id: 0,
        }
    }

    #[test]
    fn strict_improvement_only() {
        let mut a = Archive::new(CellIndexer::hbd());
        let d = vec![0.5, 0.5, 0.5];
        assert_eq!(
            a.try_insert(elite(0.6, d.clone())),
            Some((8 * 256 + 8 * 16 + 8, true))
        );
        assert_eq!(
            a.try_insert(elite(0.6, d.clone())).map(|r| r.1),
            Some(false)
        );
        assert_eq!(a.try_insert(elite(0.7, d.clone())).map(|r| r.1), Some(true));
        assert_eq!(a.iter().next().unwrap().1.performance, 0.7);
        assert_eq!(a.len(), 1);
    }

    #[test]
    fn hbd_grid_has_4096_cells_and_clamps_edges() {
        let ix = CellIndexer::hbd();
        assert_eq!(ix.capacity(), 4096);
        assert_eq!(ix.key_of_descriptor(&[1.0, 1.0, 1.0]), Some(4095));
        assert_eq!(ix.key_of_descriptor(&[0.0, 0.0, 0.0]), Some(0));
        assert_eq!(ix.key_of_descriptor(&[0.0, 0.0]), None);
    }

    #[test]
    fn environment_keys_follow_the_spec() {
        let a = CellIndexer::Environment;
        let e = elite(0.1, vec![]);
        assert_eq!(
            a.key_of(&e),
            Some(EnvDescriptor::of(&EnvironmentSpec::NORMAL).unwrap().key())
        );
    }

    #[test]
    fn best_prefers_lowest_key_on_ties() {
        let mut a = Archive::new(CellIndexer::hbd());
        a.try_insert(elite(0.5, vec![0.9, 0.9, 0.9]));
        a.try_insert(elite(0.5, vec![0.1, 0.1, 0.1]));
        assert_eq!(a.best().unwrap().0, 273);
    }
}
