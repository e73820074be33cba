//! Named, replayable RNG substreams derived from one experiment seed.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// ChaCha20 stream keyed by `(seed, label)` and positioned on stream `index`.
///
/// Distinct labels give unrelated keys; distinct indices under one label give
/// independent ChaCha streams, so Monte-Carlo trials can be split freely.
pub fn substream(seed: u64, label: &str, index: u64) -> ChaCha20Rng {
    let mut state = seed ^ fnv1a(label);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha20Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

pub const MASKS: &str = "masks";
pub const CHECKS: &str = "checks";
pub const ADVERSARY: &str = "adversary";
pub const INPUTS: &str = "inputs";
pub const SIMULATOR: &str = "simulator";
pub const MODEL: &str = "model";
