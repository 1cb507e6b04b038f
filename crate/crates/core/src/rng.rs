//! Counter-based generator keyed by `(seed, scenario, replicate, ...)`.
//!
//! Each output is a pure function of `(key, counter)`: the SplitMix64
//! finalizer applied to `key + (counter + 1) * GAMMA`. Streams are derived by
//! hashing a parent key with a tag, so any replicate's draws can be produced
//! without touching other replicates.

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combines a key with one more component.
#[inline]
pub fn derive_key(key: u64, component: u64) -> u64 {
    mix64(key ^ mix64(component.wrapping_add(GAMMA)).rotate_left(17))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(key: u64) -> Self {
        CounterRng { key, counter: 0 }
    }

    /// Generator for `path` components below `seed`.
    pub fn keyed(seed: u64, path: &[u64]) -> Self {
        let key = path.iter().fold(mix64(seed), |k, &c| derive_key(k, c));
        CounterRng::new(key)
    }

    /// Independent child stream; does not advance `self`.
    pub fn split(&self, tag: u64) -> Self {
        CounterRng::new(derive_key(self.key, tag))
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    /// Number of 64-bit words drawn so far.
    pub fn position(&self) -> u64 {
        self.counter
    }

    #[inline]
    pub fn word_at(&self, counter: u64) -> u64 {
        mix64(self.key.wrapping_add(counter.wrapping_add(1).wrapping_mul(GAMMA)))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let w = self.word_at(self.counter);
        self.counter += 1;
        w
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in `0..n` by multiply-shift.
    #[inline]
    pub fn next_index(&mut self, n: usize) -> usize {
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> u8 {
        (self.next_f64() < p) as u8
    }
}
