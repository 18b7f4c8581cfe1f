//! Seeded random streams.
//!
//! Every randomized routine takes an explicit [`RngStream`]. A stream is keyed
//! by `(seed, stream_id)` on ChaCha8, so one trial seed fans out into
//! independent substreams (instance generation, sampling, ...) whose draws do
//! not interfere, and identical keys replay identical sequences on any thread.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Substream used for synthetic instance generation.
pub const STREAM_INSTANCE: u64 = 0;
/// Substream used for observation sampling.
pub const STREAM_SAMPLING: u64 = 1;

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    /// Fresh stream under the same seed, independent of this one's position.
    pub fn split(&self, stream: u64) -> Self {
        Self::with_stream(self.seed, stream)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
}
