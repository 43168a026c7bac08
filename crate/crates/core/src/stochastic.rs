//! Reproducible, splittable randomness.
//!
//! Every Monte-Carlo iteration draws from its own ChaCha8 stream selected by
//! `(seed, stream_id)`, so results do not depend on how iterations are
//! scheduled across threads.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_probability, Result};

/// An independent random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
    stream_id: u64,
}

/// Opens stream `stream_id` of the generator seeded with `seed`.
pub fn derive_stream(seed: u64, stream_id: u64) -> RngStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    RngStream { rng, stream_id }
}

impl RngStream {
    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Bernoulli trial; rejects probabilities outside `[0, 1]`.
    pub fn bernoulli(&mut self, prob: f64) -> Result<bool> {
        check_probability("prob", prob)?;
        Ok(self.chance(prob))
    }

    /// Bernoulli trial for an already validated probability.
    #[inline]
    pub(crate) fn chance(&mut self, prob: f64) -> bool {
        debug_assert!((0.0..=1.0).contains(&prob));
        self.rng.random_bool(prob)
    }

    /// Uniform index in `0..n` (`n > 0`).
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Uniform real in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.rng.random()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_same_draws() {
        let mut a = derive_stream(1, 0);
        let mut b = derive_stream(1, 0);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn distinct_streams_differ() {
        let mut a = derive_stream(1, 0);
        let mut b = derive_stream(1, 1);
        let xs: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_ne!(xs, ys);
    }

    #[test]
    fn degenerate_probabilities() {
        let mut s = derive_stream(3, 3);
        for _ in 0..1000 {
            assert!(!s.bernoulli(0.0).unwrap());
            assert!(s.bernoulli(1.0).unwrap());
        }
        assert!(s.bernoulli(1.5).is_err());
        assert!(s.bernoulli(-0.1).is_err());
        assert!(s.bernoulli(f64::NAN).is_err());
    }

    #[test]
    fn bernoulli_mean() {
        let mut s = derive_stream(2024, 0);
        let hits = (0..100_000).filter(|_| s.bernoulli(0.8).unwrap()).count();
        let mean = hits as f64 / 1e5;
        assert!((mean - 0.8).abs() < 0.004, "mean {mean}");
    }
}
