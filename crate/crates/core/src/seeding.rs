//! Deterministic per-purpose random streams.
//!
//! Every random draw in a session comes from a stream keyed by
//! `(session seed, purpose, iteration)`, so replaying a history reproduces
//! exactly the draws of the original run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Propose = 1,
    Evaluate = 2,
    Train = 3,
    ModelInit = 4,
    Importance = 5,
    Landscape = 6,
}

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(purpose as u64).to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    key[24..].copy_from_slice(b"ctune\0\0\x01");
    ChaCha8Rng::from_seed(key)
}
