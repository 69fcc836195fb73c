//! Seeded random streams.
//!
//! Every run draws from ChaCha8 streams (`rand_chacha::ChaCha8Rng`) whose
//! keys are derived from the run seed with [`mix_seed`], a SplitMix64
//! finalizer. Sampling helpers below only consume raw `u64` words, so the
//! output depends on nothing but the ChaCha8 keystream.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// SplitMix64 mix of `(base, index)`.
///
/// Used both for per-run seeds (`base_seed`, run index) and for per-stream
/// keys inside a run (run seed, stream id).
pub fn mix_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent sub-streams of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Graph = 1,
    Injection = 2,
    Routing = 3,
    Faults = 4,
}

/// Deterministic generator used throughout the simulator.
#[derive(Debug, Clone)]
pub struct SimRng {
    inner: ChaCha8Rng,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
            chunk.copy_from_slice(&mix_seed(seed, i as u64).to_le_bytes());
        }
        SimRng {
            inner: ChaCha8Rng::from_seed(key),
        }
    }

    pub fn for_stream(run_seed: u64, stream: Stream) -> Self {
        Self::new(mix_seed(run_seed, stream as u64))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in `0..n` (Lemire's widening multiply with rejection).
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index range must be non-empty");
        let n = n as u64;
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as usize;
            }
        }
    }

    /// Exponential sample with the given mean.
    pub fn exp_mean(&mut self, mean: f64) -> f64 {
        // 1 - unit() lies in (0, 1], so the logarithm is finite.
        -mean * (1.0 - self.unit()).ln()
    }
}

/// Inter-arrival delay of a Poisson injection process with the given rate.
pub fn next_injection_delay(rate: f64, rng: &mut SimRng) -> Result<f64> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::param("rate", format!("must be positive, got {rate}")));
    }
    loop {
        let d = rng.exp_mean(1.0 / rate);
        if d > 0.0 {
            return Ok(d);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = SimRng::for_stream(7, Stream::Injection);
        let mut b = SimRng::for_stream(7, Stream::Injection);
        let xs: Vec<u64> = (0..16).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..16).map(|_| b.next_u64()).collect();
        assert_eq!(xs, ys);
        let mut c = SimRng::for_stream(7, Stream::Routing);
        assert_ne!(xs[0], c.next_u64());
    }

    #[test]
    fn mix_is_not_identity() {
        assert_ne!(mix_seed(0, 0), mix_seed(0, 1));
        assert_ne!(mix_seed(1, 0), mix_seed(0, 1));
    }

    #[test]
    fn injection_delay_mean() {
        let mut rng = SimRng::new(42);
        let n = 1_000_000;
        let mean = (0..n)
            .map(|_| next_injection_delay(2.0, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!((0.497..=0.503).contains(&mean), "mean {mean}");
    }

    #[test]
    fn injection_delay_fixed_seed() {
        let a = next_injection_delay(1.0, &mut SimRng::new(3)).unwrap();
        let b = next_injection_delay(1.0, &mut SimRng::new(3)).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn injection_delay_positive_at_high_rate() {
        let mut rng = SimRng::new(11);
        assert!((0..100_000).all(|_| next_injection_delay(1e6, &mut rng).unwrap() > 0.0));
    }

    #[test]
    fn injection_delay_rejects_bad_rate() {
        let mut rng = SimRng::new(0);
        assert!(next_injection_delay(0.0, &mut rng).is_err());
        assert!(next_injection_delay(-1.0, &mut rng).is_err());
    }

    #[test]
    fn index_is_in_range_and_covers() {
        let mut rng = SimRng::new(5);
        let mut seen = [false; 7];
        for _ in 0..1000 {
            seen[rng.index(7)] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }
}
