//! Token embeddings for the linguistic stream.
//!
//! Real deployments plug a pretrained encoder in behind [`EmbeddingProvider`].
//! [`HashEmbedding`] is a deterministic stand-in: the vector for a token
//! depends only on its composed lowercase text and the seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::orthography::fold;

pub trait EmbeddingProvider {
    fn dim(&self) -> usize;
    fn embed(&self, token: &str) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedding {
    pub dim: usize,
    pub seed: u64,
}

impl HashEmbedding {
    pub fn new(dim: usize, seed: u64) -> Self {
        HashEmbedding { dim, seed }
    }
}

/// 64-bit FNV-1a; stable across platforms and toolchains.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

impl EmbeddingProvider for HashEmbedding {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, token: &str) -> Vec<f64> {
        let key = fnv1a(fold(token).as_bytes()) ^ self.seed.rotate_left(17);
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        (0..self.dim).map(|_| rng.random_range(-1.0..1.0)).collect()
    }
}
