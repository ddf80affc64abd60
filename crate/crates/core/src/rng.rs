//! Keyed, counter-based pseudo-random streams (SplitMix64 family).
//!
//! Every Poisson stream in the simulator is a pure function of
//! `(master_seed, stream key)`. Regenerating a stream therefore always
//! reproduces it bit-exactly, which is what makes lazy window growth and
//! restriction exact rather than approximate.

/// One SplitMix64 scramble round (Sebastiano Vigna's finalizer).
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sequential SplitMix64 generator.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform double in the open interval (0, 1).
    #[inline]
    pub fn next_open01(&mut self) -> f64 {
        // 53 bits, offset by half an ulp so 0 and 1 are excluded.
        (((self.next_u64() >> 11) as f64) + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform double in [0, 1).
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Exponential waiting time with the given rate.
    #[inline]
    pub fn next_exp(&mut self, rate: f64) -> f64 {
        -self.next_open01().ln() / rate
    }

    /// Uniform integer in [0, n).
    #[inline]
    pub fn next_below(&mut self, n: u64) -> u64 {
        // Multiply-shift; bias is negligible for the small n used here.
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }
}

/// Combine a seed with a sequence of words, scrambling after each.
pub fn mix_words(seed: u64, words: &[u64]) -> u64 {
    let mut h = mix64(seed);
    for &w in words {
        h = mix64(h ^ w);
    }
    h
}

/// Per-trial seed derived from a master seed, listed in run manifests.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    mix_words(master, &[0x7472_6961_6c00_0000, trial])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_sequence() {
        let mut a = SplitMix64::new(42);
        let mut b = SplitMix64::new(42);
        for _ in 0..32 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn open01_excludes_endpoints() {
        let mut r = SplitMix64::new(7);
        for _ in 0..10_000 {
            let u = r.next_open01();
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn exp_mean_roughly_inverse_rate() {
        let mut r = SplitMix64::new(11);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| r.next_exp(4.0)).sum::<f64>() / n as f64;
        assert!((mean - 0.25).abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn trial_seeds_distinct() {
        let s: Vec<u64> = (0..100).map(|i| trial_seed(1, i)).collect();
        let mut t = s.clone();
        t.sort_unstable();
        t.dedup();
        assert_eq!(t.len(), s.len());
    }
}
