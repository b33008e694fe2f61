//! Keyed random streams. Each stream is a ChaCha8 generator whose seed is
//! derived from a base seed and a tuple of integer keys, so draws for one unit
//! or replicate do not depend on how many other streams were used before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Purpose tags that keep streams for different uses of one seed apart.
pub mod tag {
    pub const POPULATION: u64 = 1;
    pub const SAMPLE: u64 = 2;
    pub const RESPONSE: u64 = 3;
    pub const BOOTSTRAP: u64 = 4;
    pub const IMPUTATION: u64 = 5;
    pub const BOOTSTRAP_IMPUTATION: u64 = 6;
}

pub fn stream(seed: u64, keys: &[u64]) -> StreamRng {
    let mut state = seed;
    let mut acc = splitmix64(&mut state);
    for &k in keys {
        state ^= k.wrapping_mul(0xD6E8_FEB8_6659_FD93).rotate_left(17) ^ acc;
        acc = splitmix64(&mut state);
    }
    let mut bytes = [0u8; 32];
    for chunk in bytes.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

/// A seed for a derived computation, e.g. the imputation seed of one bootstrap replicate.
pub fn derive_seed(seed: u64, keys: &[u64]) -> u64 {
    use rand::RngCore;
    stream(seed, keys).next_u64()
}
