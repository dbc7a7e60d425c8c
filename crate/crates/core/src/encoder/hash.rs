use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::EncoderBackend;

/// Feature-hashing bag-of-words encoder: each lowercase alphanumeric token selects one row of a
/// seeded random `buckets x dim` matrix.
#[derive(Debug, Clone)]
pub struct HashEncoder {
    dim: usize,
    buckets: usize,
    seed: u64,
    window: usize,
    weights: Vec<f32>,
}

impl HashEncoder {
    pub fn new(dim: usize, buckets: usize, seed: u64) -> Self {
        assert!(dim > 0 && buckets > 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // unit expected squared norm per row
        let scale = (3.0 / dim as f32).sqrt();
        let weights = (0..dim * buckets).map(|_| rng.gen_range(-scale..scale)).collect();
        HashEncoder {
            dim,
            buckets,
            seed,
            window: 512,
            weights,
        }
    }

    pub fn with_window(mut self, window: usize) -> Self {
        self.window = window.max(1);
        self
    }

    fn bucket(&self, token: &str) -> usize {
        // FNV-1a over seed then token bytes
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.seed.to_le_bytes().iter().chain(token.as_bytes()) {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        (h % self.buckets as u64) as usize
    }

    pub fn row_for(&self, token: &str) -> &[f32] {
        let b = self.bucket(token);
        &self.weights[b * self.dim..(b + 1) * self.dim]
    }
}

impl EncoderBackend for HashEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn window(&self) -> usize {
        self.window
    }

    fn tokenize(&self, text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .collect()
    }

    fn token_vectors(&self, tokens: &[String]) -> Result<Vec<Vec<f32>>, String> {
        Ok(tokens.iter().map(|t| self.row_for(t).to_vec()).collect())
    }

    fn parameter_checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.dim as u64).to_le_bytes());
        h.update((self.buckets as u64).to_le_bytes());
        h.update(self.seed.to_le_bytes());
        for w in &self.weights {
            h.update(w.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}
