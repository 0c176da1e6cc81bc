//! Seed derivation.
//!
//! Every stochastic step in the crate draws from a ChaCha8 stream keyed by a
//! seed derived from `(base seed, stream, index)`, so results are a pure
//! function of the configured seeds and independent of evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a base seed and two indices.
pub fn derive(seed: u64, a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b.rotate_left(17))
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// stream tags
pub(crate) const STREAM_INIT: u64 = 0x1;
pub(crate) const STREAM_SHUFFLE: u64 = 0x2;
pub(crate) const STREAM_DROPOUT: u64 = 0x3;
pub(crate) const STREAM_MC: u64 = 0x4;
pub(crate) const STREAM_FRAME: u64 = 0x5;
pub(crate) const STREAM_CALIB: u64 = 0x6;
