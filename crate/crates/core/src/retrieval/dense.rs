//! Dense channel: pluggable embedders and cosine similarity.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{tokenize, RetrievalError};

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, RetrievalError>;
}

/// Deterministic token-bag embedder for tests and offline runs. Each token
/// is hashed (FNV-1a) into one of `dim` buckets and the counts are
/// L2-normalized. It has no semantic knowledge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    pub dim: usize,
}

impl HashEmbedder {
    pub const DEFAULT_DIM: usize = 256;

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a(token.as_bytes()) % self.dim as u64) as usize
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder {
            dim: Self::DEFAULT_DIM,
        }
    }
}

impl Embedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, RetrievalError> {
        if self.dim == 0 {
            return Err(RetrievalError::EmbedderFailure(String::from(
                "embedding dimension is zero",
            )));
        }
        let mut v = vec![0.0; self.dim];
        for t in tokenize(text) {
            v[self.bucket(&t)] += 1.0;
        }
        normalize(&mut v);
        Ok(v)
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn normalize(v: &mut [f64]) {
    let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

/// Cosine similarity; zero vectors have similarity 0 with everything.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = libm::sqrt(a.iter().map(|x| x * x).sum::<f64>());
    let nb = libm::sqrt(b.iter().map(|x| x * x).sum::<f64>());
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
