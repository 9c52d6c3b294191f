//! Named, seedable random streams.
//!
//! Every stream is a ChaCha20 generator whose 256-bit key is the SHA-256 of
//! the root seed followed by a label path. Two runs that ask for the same
//! `(root, path)` get the same stream regardless of scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha20Rng;

/// One component of a stream label path.
#[derive(Debug, Clone, Copy)]
pub enum Label<'a> {
    Name(&'a str),
    Index(u64),
}

impl<'a> From<&'a str> for Label<'a> {
    fn from(s: &'a str) -> Self {
        Label::Name(s)
    }
}

impl From<u64> for Label<'_> {
    fn from(i: u64) -> Self {
        Label::Index(i)
    }
}

impl From<usize> for Label<'_> {
    fn from(i: usize) -> Self {
        Label::Index(i as u64)
    }
}

pub fn stream(root: u64, path: &[Label<'_>]) -> StreamRng {
    let mut hasher = Sha256::new();
    hasher.update(b"qsid-stream-v1");
    hasher.update(root.to_le_bytes());
    for label in path {
        match label {
            Label::Name(s) => {
                hasher.update([0u8]);
                hasher.update((s.len() as u64).to_le_bytes());
                hasher.update(s.as_bytes());
            }
            Label::Index(i) => {
                hasher.update([1u8]);
                hasher.update(i.to_le_bytes());
            }
        }
    }
    let key: [u8; 32] = hasher.finalize().into();
    ChaCha20Rng::from_seed(key)
}

/// Derive a child seed (for APIs that take a plain `u64`).
pub fn child_seed(root: u64, path: &[Label<'_>]) -> u64 {
    use rand::RngCore;
    stream(root, path).next_u64()
}
