//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha20 generator keyed by
//! the user seed and a stream name (`"synth"`, `"init"`, `"hmm"`, ...), so
//! components stay reproducible independently of each other.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha20Rng;

pub fn substream(seed: u64, name: &str) -> StreamRng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest[..32]);
    ChaCha20Rng::from_seed(key)
}
