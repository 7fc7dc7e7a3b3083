use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Seeded generator used for every random draw in the engine.
///
/// Backed by ChaCha8 (`rand_chacha`), whose output stream is fixed by its
/// published algorithm, so a seed produces the same draws on every platform.
/// All conversions to floats and integers are done here rather than through
/// `rand` distributions so that the value sequence cannot drift with a
/// dependency upgrade:
///
/// * `uniform()` takes the top 53 bits of a `u64`, giving `[0, 1)`.
/// * `normal()` is Box–Muller on two uniforms (the sine branch is discarded).
/// * `below(n)` uses rejection sampling on `u64` to avoid modulo bias.
///
/// Independent sub-streams (per epoch, per minibatch, ...) come from
/// [`Rng::stream`], which selects ChaCha's stream word, so they never depend
/// on how many values another stream has consumed.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng::stream(seed, 0)
    }

    pub fn stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Rng { seed, inner }
    }

    /// A fresh generator for a sub-task, keyed by the parent seed and a path of ids.
    pub fn derive(&self, ids: &[u64]) -> Rng {
        // FNV-1a over the id path; distinct paths give distinct stream words
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for id in ids {
            for b in id.to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        Rng::stream(self.seed, h)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        // 1 - u keeps the log argument in (0, 1]
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
