//! Deterministic random streams.
//!
//! One master seed fans out into independently-seeded ChaCha streams keyed
//! by name (and optionally an epoch counter), so that corpus shuffling,
//! parameter init, and batch order draw from separate streams and an
//! ablation run shares its initialization with the full run.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a; stable across platforms and releases, unlike the std hasher.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, Copy)]
pub struct SeedSplitter {
    master: u64,
}

impl SeedSplitter {
    pub fn new(master: u64) -> Self {
        SeedSplitter { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Stream for a named purpose ("init", "shuffle", ...).
    pub fn stream(&self, name: &str) -> ChaCha8Rng {
        self.stream_at(name, 0)
    }

    /// Stream for a named purpose at a counter (e.g. batch order per epoch).
    pub fn stream_at(&self, name: &str, counter: u64) -> ChaCha8Rng {
        let mut bytes = Vec::with_capacity(name.len() + 16);
        bytes.extend_from_slice(&self.master.to_le_bytes());
        bytes.extend_from_slice(name.as_bytes());
        bytes.extend_from_slice(&counter.to_le_bytes());
        ChaCha8Rng::seed_from_u64(fnv1a(&bytes))
    }
}
