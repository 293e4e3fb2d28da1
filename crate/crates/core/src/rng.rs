//! Deterministic random streams.
//!
//! Every random choice in the crate flows through an [`RngStream`] seeded from a
//! single 64-bit seed. Named substreams ([`RngStream::derive`]) are keyed by a
//! hash of the parent key and a label, so adding a new consumer never perturbs
//! the draws seen by existing ones. The underlying generator is ChaCha8, whose
//! output stream is stable across platforms and releases.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use sha2::{Digest, Sha256};

use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct RngStream {
    key: [u8; 32],
    rng: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"nice.rng.v1");
        h.update(seed.to_le_bytes());
        Self::from_key(h.finalize().into())
    }

    fn from_key(key: [u8; 32]) -> Self {
        Self {
            key,
            rng: ChaCha8Rng::from_seed(key),
            spare_normal: None,
        }
    }

    /// Child stream keyed by `label`. Independent of how many draws have been
    /// taken from `self`.
    pub fn derive(&self, label: &str) -> RngStream {
        let mut h = Sha256::new();
        h.update(self.key);
        h.update([0u8]);
        h.update(label.as_bytes());
        Self::from_key(h.finalize().into())
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw via the Box-Muller transform of two uniforms.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // 1 - u keeps the argument of ln strictly positive.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (sin, cos) = (2.0 * std::f64::consts::PI * u2).sin_cos();
        self.spare_normal = Some(r * sin);
        r * cos
    }

    /// Unbiased uniform integer in `[0, bound)`.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0);
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % bound;
            }
        }
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    pub fn uniform_tensor(&mut self, rows: usize, cols: usize) -> Tensor {
        Tensor::from_fn(rows, cols, |_, _| self.uniform())
    }

    pub fn normal_tensor(&mut self, rows: usize, cols: usize) -> Tensor {
        Tensor::from_fn(rows, cols, |_, _| self.normal())
    }
}

/// Entry point used by everything that needs randomness: one seed, one stream.
pub fn seeded_rng(seed: u64) -> RngStream {
    RngStream::new(seed)
}
