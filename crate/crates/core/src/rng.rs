//! Deterministic, labelled random streams.
//!
//! A stream is identified by a `(seed, stream_label)` pair. The generator is
//! ChaCha20 (`rand_chacha::ChaCha20Rng`) keyed with
//! `SHA-256(seed as 8 little-endian bytes || 0x00 || UTF-8 label)`, so the same
//! pair reproduces the same draws on every platform. Child streams are derived
//! by appending `/<name>` to the label.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSpec {
    pub seed: u64,
    pub stream_label: String,
}

impl RngSpec {
    pub fn new(seed: u64, stream_label: impl Into<String>) -> Self {
        Self {
            seed,
            stream_label: stream_label.into(),
        }
    }

    /// A child stream named `name` under this one.
    pub fn derive(&self, name: &str) -> RngSpec {
        RngSpec {
            seed: self.seed,
            stream_label: format!("{}/{}", self.stream_label, name),
        }
    }

    pub fn key(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update([0u8]);
        h.update(self.stream_label.as_bytes());
        h.finalize().into()
    }

    pub fn rng(&self) -> ChaCha20Rng {
        ChaCha20Rng::from_seed(self.key())
    }
}
