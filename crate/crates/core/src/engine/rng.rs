//! Seeded random streams.
//!
//! Every subsystem draws from its own ChaCha stream keyed by the run seed and
//! a label, so adding draws in one subsystem never shifts another's sequence.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

#[derive(Debug, Clone)]
pub struct SimRng {
    inner: ChaCha12Rng,
}

/// FNV-1a; stable across platforms and releases, unlike `DefaultHasher`.
fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl SimRng {
    /// The stream named `label` under `seed`.
    pub fn substream(seed: u64, label: &str) -> Self {
        let mut inner = ChaCha12Rng::seed_from_u64(seed);
        inner.set_stream(label_hash(label));
        Self { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`; `lo` when the interval is empty.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}

/// Per-run random streams.
#[derive(Debug, Clone)]
pub struct Streams {
    pub placement: SimRng,
    pub speeds: SimRng,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self {
            placement: SimRng::substream(seed, "placement"),
            speeds: SimRng::substream(seed, "speeds"),
        }
    }
}
