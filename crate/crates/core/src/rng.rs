//! Per-purpose random streams.
//!
//! Every random draw in the simulator comes from a ChaCha20 stream
//! (`rand_chacha::ChaCha20Rng`). ChaCha20 is counter based, so a stream is
//! fully addressed by its 256-bit key plus a 64-bit stream id; nothing depends
//! on how many values another stream consumed or on thread scheduling.
//!
//! A stream is derived from `(seed, purpose, path)`:
//! - the key is four SplitMix64 outputs seeded by folding `seed`, the purpose
//!   tag and each path component through the SplitMix64 finalizer;
//! - the stream id is the purpose tag.
//!
//! The path carries indices such as round, client id and epoch.

use rand_chacha::ChaCha20Rng;
use rand::SeedableRng;

/// What a stream is used for. The discriminant is the ChaCha stream id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Data = 1,
    Partition = 2,
    Init = 3,
    Shuffle = 4,
    Participation = 5,
    Attack = 6,
    ForgetSplit = 7,
    Ascent = 8,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a seed, purpose and path into a single 64-bit value.
pub fn derive_seed(seed: u64, purpose: Purpose, path: &[u64]) -> u64 {
    let mut h = mix(seed.wrapping_add(GOLDEN));
    h = mix(h ^ (purpose as u64).wrapping_mul(GOLDEN));
    for &p in path {
        h = mix(h.wrapping_add(GOLDEN) ^ p);
    }
    h
}

/// Opens the stream addressed by `(seed, purpose, path)`.
pub fn stream(seed: u64, purpose: Purpose, path: &[u64]) -> ChaCha20Rng {
    let mut state = derive_seed(seed, purpose, path);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        state = state.wrapping_add(GOLDEN);
        chunk.copy_from_slice(&mix(state).to_le_bytes());
    }
    let mut rng = ChaCha20Rng::from_seed(key);
    rng.set_stream(purpose as u64);
    rng
}
