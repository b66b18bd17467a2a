//! Seed derivation. One master seed drives every randomized computation;
//! internal streams split off deterministically so that parallel execution
//! order never changes results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The RNG used throughout. Seedable, portable, and fast enough for the
/// chain hot loops.
pub type Rng = ChaCha8Rng;

/// Derives an independent stream seed from a master seed.
///
/// SplitMix64 finalizer over `master + GOLDEN * (stream + 1)`; distinct
/// streams land in distinct, well-mixed states.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(stream.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
