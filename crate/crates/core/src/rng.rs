//! Counter-based random streams.
//!
//! Every Monte Carlo sample, rollout or SGD draw is generated from its own
//! sub-stream `(seed, stream_id, index)`. A sub-stream is a ChaCha8 generator
//! keyed by `(seed, stream_id)` and positioned on the ChaCha stream `index`,
//! so the numbers a sample sees never depend on which thread produced it or
//! on how work was sharded.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Samples per reduction shard. Sums are formed per shard and then across
/// shards in index order, so results are independent of the thread count.
pub const SHARD_SIZE: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub const fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Same seed, different logical stream.
    pub const fn fork(&self, stream_id: u64) -> Self {
        Self {
            seed: self.seed,
            stream_id,
        }
    }

    pub fn substream(&self, index: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.stream_id.to_le_bytes());
        // Constant tag so an all-zero (seed, id) pair still gets a non-trivial key.
        key[16..24].copy_from_slice(&0x9e37_79b9_7f4a_7c15u64.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(index);
        rng
    }
}

pub(crate) fn standard_normals<R: rand::Rng>(rng: &mut R, len: usize) -> DVector<f64> {
    DVector::from_iterator(len, (0..len).map(|_| StandardNormal.sample(rng)))
}

/// Sum with a fixed shard/merge order.
pub fn ordered_sum(values: &[f64]) -> f64 {
    values
        .chunks(SHARD_SIZE)
        .map(|shard| shard.iter().sum::<f64>())
        .fold(0.0, |acc, s| acc + s)
}

/// Sample mean and unbiased sample variance, both reduced in fixed order.
pub fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = ordered_sum(values) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let centered: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    (mean, ordered_sum(&centered) / (n - 1) as f64)
}
