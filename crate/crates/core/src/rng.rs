//! Portable seeded randomness.
//!
//! Every random draw in the crate goes through [`SeededRng`], a ChaCha8 stream
//! cipher keyed with the 64-bit seed written little-endian into the first
//! eight key bytes (remaining 24 bytes zero, stream and nonce zero). On top of
//! the raw `u64` stream:
//!
//! * `uniform()` is `(next_u64 >> 11) * 2^-53`, a value in `[0, 1)`;
//! * `below(n)` rejects draws under `2^64 mod n` then reduces modulo `n`;
//! * `normal()` is one Box-Muller cosine branch, `sqrt(-2 ln(1 - u1)) cos(2 pi u2)`;
//! * `shuffle()` is Fisher-Yates from the last index down using `below(i + 1)`.
//!
//! Child seeds are the first eight bytes (little-endian) of
//! `SHA-256(seed_le_bytes || label_utf8)`.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        Self {
            inner: ChaCha8Rng::from_seed(key),
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let threshold = n.wrapping_neg() % n;
        loop {
            let r = self.next_u64();
            if r >= threshold {
                return r % n;
            }
        }
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// First `k` entries of a uniformly random permutation of `0..n`.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        let k = k.min(n);
        for i in 0..k {
            let j = i + self.below((n - i) as u64) as usize;
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx
    }
}

/// Derives an independent child seed for a named stage.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    derive_seed_bytes(seed, label.as_bytes())
}

/// Derives a child seed from arbitrary bytes (e.g. the contents of a row).
pub fn derive_seed_bytes(seed: u64, bytes: &[u8]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(head)
}
