use crate::env::{EnvironmentSpec, InvalidAttribute, ATTRIBUTES, LEVELS};

/// Number of distinct environment descriptors.
pub const ENV_CELLS: usize = 4096;

/// Perturbation index of each attribute, in attribute order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EnvDescriptor(pub [usize; ATTRIBUTES]);

impl EnvDescriptor {
    pub fn of(spec: &EnvironmentSpec) -> Result<Self, InvalidAttribute> {
        spec.indices().map(EnvDescriptor)
    }

    pub fn spec(&self) -> EnvironmentSpec {
        EnvironmentSpec::from_indices(self.0)
    }

    /// Mixed-radix key, first attribute most significant.
    pub fn key(&self) -> usize {
        self.0.iter().fold(0, |k, &i| k * LEVELS + i)
    }

    /// Inverse of [`EnvDescriptor::key`]; `None` when `key >= 4096`.
    pub fn from_key(key: usize) -> Option<Self> {
        if key >= ENV_CELLS {
            return None;
        }
        let mut idx = [0; ATTRIBUTES];
        let mut k = key;
        for slot in idx.iter_mut().rev() {
            *slot = k % LEVELS;
            k /= LEVELS;
        }
        Some(EnvDescriptor(idx))
    }

    pub fn as_vector(&self) -> Vec<f64> {
        self.0.iter().map(|&i| i as f64).collect()
    }
}

pub fn env_descriptor(spec: &EnvironmentSpec) -> Result<EnvDescriptor, InvalidAttribute> {
    EnvDescriptor::of(spec)
}

pub fn decode(d: EnvDescriptor) -> EnvironmentSpec {
    d.spec()
}
