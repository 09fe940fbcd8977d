//! Counter-based random streams.
//!
//! Mask bits and measurement noise are drawn from SplitMix64 (Steele, Lea and
//! Flood, 2014) used as a keyed hash: every draw is a pure function of
//! `(seed, stream, index)`. A shot or mask index selects the stream and the
//! pixel index selects the counter, so any subset of draws can be produced in
//! any order, serially or in parallel, with identical results.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Keyed stream: `draw(stream, index)` is the `index`-th SplitMix64 output of
/// a generator whose 64-bit state was seeded from `(seed, stream)`.
#[derive(Clone, Copy, Debug)]
pub struct KeyedStream {
    seed: u64,
}

impl KeyedStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    #[inline]
    fn state(&self, stream: u64) -> u64 {
        splitmix64(self.seed ^ splitmix64(stream.wrapping_add(1).wrapping_mul(GOLDEN)))
    }

    #[inline]
    pub fn next_u64(&self, stream: u64, index: u64) -> u64 {
        splitmix64(
            self.state(stream)
                .wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN)),
        )
    }

    /// Uniform on [0, 1) with 53 bits of precision.
    #[inline]
    pub fn uniform(&self, stream: u64, index: u64) -> f64 {
        (self.next_u64(stream, index) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller on the counter pair `(2·index, 2·index+1)`.
    #[inline]
    pub fn normal(&self, stream: u64, index: u64) -> f64 {
        let u1 = 1.0 - self.uniform(stream, 2 * index); // (0, 1]
        let u2 = self.uniform(stream, 2 * index + 1);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_values() {
        // First outputs of the reference SplitMix64 generator seeded with 0.
        let mut state = 0u64;
        let mut next = || {
            state = state.wrapping_add(GOLDEN);
            splitmix64(state)
        };
        assert_eq!(next(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(next(), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn streams_are_order_independent() {
        let s = KeyedStream::new(42);
        let forward: Vec<u64> = (0..64).map(|i| s.next_u64(3, i)).collect();
        let backward: Vec<u64> = (0..64).rev().map(|i| s.next_u64(3, i)).collect();
        assert!(forward.iter().eq(backward.iter().rev()));
        assert_ne!(s.next_u64(3, 0), s.next_u64(4, 0));
    }

    #[test]
    fn normal_moments() {
        let s = KeyedStream::new(7);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|i| s.normal(0, i)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }
}
