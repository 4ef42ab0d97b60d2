//! Seeded, independent random sub-streams.
//!
//! Every consumer of randomness draws from its own ChaCha stream derived from
//! `(seed, tag)`, so changing e.g. the noise variance never perturbs the
//! support or signal draws of the same trial.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Operator = 1,
    Supports = 2,
    Signs = 3,
    ValueNoise = 4,
    MeasurementNoise = 5,
    Mask = 6,
    Sequence = 7,
    Pilot = 8,
}

pub fn stream(seed: u64, tag: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag as u64);
    rng
}

/// Seed of trial `index` under a base seed.
pub fn trial_seed(base: u64, index: u64) -> u64 {
    base.wrapping_add(index)
}

/// Splits a base seed into a disjoint family (e.g. pilot vs. averaging trials).
pub fn derive(base: u64, family: u64) -> u64 {
    // SplitMix64 finalizer.
    let mut z = base ^ family.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
