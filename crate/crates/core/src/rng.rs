//! Counter-based random streams.
//!
//! A stream is a `(seed, counter)` pair; the `i`-th draw is a pure function of
//! the seed and `i`, so two streams with equal state always agree, on any
//! platform, and independent consumers (data generation, Gumbel noise,
//! shuffling) can be given their own derived streams.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    counter: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    /// Resumes a stream at a given position.
    pub fn at(seed: u64, counter: u64) -> Self {
        Self { seed, counter }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Independent child stream labelled by `tag`, starting at counter 0.
    pub fn derive(&self, tag: u64) -> RngStream {
        RngStream::new(mix64(mix64(self.seed ^ 0xA5A5_5A5A_C3C3_3C3C) ^ mix64(tag.wrapping_add(GOLDEN_GAMMA))))
    }

    /// Child stream labelled by a string, e.g. a parameter name.
    pub fn derive_named(&self, name: &str) -> RngStream {
        // FNV-1a
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in name.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        self.derive(h)
    }

    pub fn next_u64(&mut self) -> u64 {
        let out = mix64(
            self.seed
                .wrapping_add(self.counter.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)),
        );
        self.counter = self.counter.wrapping_add(1);
        out
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[lo, hi)` (open at both ends in practice).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform_open()
    }

    /// Uniform integer in `0..n`; `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    /// Uniform integer in the inclusive range `[lo, hi]`.
    pub fn int_inclusive(&mut self, lo: usize, hi: usize) -> usize {
        lo + self.below((hi - lo + 1) as u64) as usize
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
