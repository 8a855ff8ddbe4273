//! Counter-based randomness.
//!
//! Every stochastic decision in a run is a pure function of the scenario
//! seed, a decision tag and the identities involved (day, people, edge).
//! Paired runs therefore see identical draws for identical decisions no
//! matter what else differs between them, which is what common random
//! numbers require.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Tag {
    World = 1,
    Adoption,
    Seeds,
    Random,
    Occupation,
    Transmit,
    Block,
    Report,
    ContactToken,
    ContactRedeem,
    Precaution,
    Inform,
    Sample,
    Device,
}

const fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// 64-bit key for `(seed, tag, a, b, c)`.
pub fn key(seed: u64, tag: Tag, a: u64, b: u64, c: u64) -> u64 {
    let mut h = splitmix(seed ^ (tag as u64).rotate_left(56));
    h = splitmix(h ^ a);
    h = splitmix(h ^ b.rotate_left(21));
    splitmix(h ^ c.rotate_left(42))
}

/// Uniform in [0, 1) for `(seed, tag, a, b, c)`.
pub fn uniform(seed: u64, tag: Tag, a: u64, b: u64, c: u64) -> f64 {
    (key(seed, tag, a, b, c) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Stream generator for decisions that need many draws (world structure,
/// daily random mixing).
pub fn stream(seed: u64, tag: Tag, a: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(key(seed, tag, a, 0, 0))
}
