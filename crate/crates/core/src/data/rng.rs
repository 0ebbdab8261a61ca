//! Seeded randomness keyed by `(master_seed, stream_path)`.
//!
//! Every stochastic stage receives an [`RngStream`] and derives children for
//! its sub-tasks (folds, trees, replications). Two streams with the same key
//! produce the same sequence no matter which thread consumes them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_path: Vec<u64>,
}

pub fn derive_stream(master_seed: u64, path: &[u64]) -> RngStream {
    RngStream {
        master_seed,
        stream_path: path.to_vec(),
    }
}

impl RngStream {
    pub fn new(master_seed: u64) -> Self {
        derive_stream(master_seed, &[])
    }

    /// Stream for sub-task `index` below this one.
    pub fn child(&self, index: u64) -> Self {
        let mut stream_path = self.stream_path.clone();
        stream_path.push(index);
        RngStream {
            master_seed: self.master_seed,
            stream_path,
        }
    }

    fn key(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(b"latent-treat/rng-stream/v1");
        hasher.update(self.master_seed.to_le_bytes());
        hasher.update((self.stream_path.len() as u64).to_le_bytes());
        for p in &self.stream_path {
            hasher.update(p.to_le_bytes());
        }
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        key
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.key())
    }
}
