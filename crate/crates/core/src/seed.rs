//! Counter-based seed derivation.
//!
//! Every random stream in the framework is a pure function of a master seed
//! and a path of labels/counters, so evaluation order and thread count never
//! change results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type SimRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a stage label into a 64-bit word (FNV-1a followed by a mixer).
pub fn label(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix(h)
}

/// Derives a child seed from `parent` and a path of words.
pub fn derive(parent: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(mix(parent.wrapping_add(GOLDEN)), |acc, &w| {
            mix(acc ^ mix(w.wrapping_add(GOLDEN)))
        })
}

/// Builds a generator for the stream identified by `(parent, path)`.
pub fn rng_for(parent: u64, path: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive(parent, path))
}
