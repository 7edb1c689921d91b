//! Portable seeded randomness: splitmix64 plus partial Fisher–Yates sampling.
//!
//! The exact constants are part of the on-disk contract; changing anything
//! here changes every golden corruption in the repository.

/// The splitmix64 generator. One `u64` of state, one multiply-xorshift
/// finalizer per draw.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(Self::GOLDEN_GAMMA);
        finalize(self.state)
    }

    /// `next_u64() mod bound`. Modulo bias is accepted so results stay
    /// reproducible in any language.
    #[inline]
    pub fn below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        self.next_u64() % bound
    }
}

#[inline]
fn finalize(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^= x >> 31;
    x
}

/// One splitmix64 draw from `value` used as a seed. Used as a hash for
/// seed derivation and for the mock providers.
#[inline]
pub fn mix64(value: u64) -> u64 {
    SplitMix64::new(value).next_u64()
}

/// Mixes a sequence of words into one 64-bit value by chaining `mix64`.
pub fn mix_all(words: &[u64]) -> u64 {
    words.iter().fold(0u64, |acc, &w| mix64(acc ^ w))
}

/// FNV-1a over bytes followed by a splitmix64 finalizer.
pub fn hash_bytes(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix64(h)
}

/// Draws `k` distinct indices from `0..n` with a partial Fisher–Yates
/// shuffle driven by `rng`, returned in ascending order.
///
/// Callers must ensure `k <= n`.
pub fn sample_indices(n: usize, k: usize, rng: &mut SplitMix64) -> Vec<usize> {
    assert!(k <= n, "cannot sample {k} of {n}");
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + rng.below((n - i) as u64) as usize;
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool.sort_unstable();
    pool
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_vectors() {
        // Published splitmix64 outputs for seed 1234567.
        let mut rng = SplitMix64::new(1_234_567);
        assert_eq!(rng.next_u64(), 6_457_827_717_110_365_317);
        assert_eq!(rng.next_u64(), 3_203_168_211_198_807_973);
        assert_eq!(rng.next_u64(), 9_817_491_932_198_370_423);
        assert_eq!(mix64(0), 0xe220_a839_7b1d_cdaf);
    }

    #[test]
    fn sample_edges() {
        let mut rng = SplitMix64::new(9);
        assert!(sample_indices(5, 0, &mut rng).is_empty());
        assert_eq!(sample_indices(5, 5, &mut rng), vec![0, 1, 2, 3, 4]);
        assert!(sample_indices(0, 0, &mut rng).is_empty());
    }
}
