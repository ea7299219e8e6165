//! Seed derivation. Every stochastic stage gets its own stream derived from
//! one master seed, so stages can be rerun independently.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for a named stage.
pub fn derive_seed(master: u64, stage: &str) -> u64 {
    stage.bytes().fold(splitmix64(master), |acc, b| splitmix64(acc ^ b as u64))
}

/// Child seed for the `index`-th member of a family (trees, chunks).
pub fn derive_indexed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(index.wrapping_add(1)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_streams() {
        assert_ne!(derive_seed(7, "generator"), derive_seed(7, "detector"));
        assert_eq!(derive_seed(7, "generator"), derive_seed(7, "generator"));
        assert_ne!(derive_indexed(7, 0), derive_indexed(7, 1));
    }
}
