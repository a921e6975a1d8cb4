//! Seeded random streams.
//!
//! Every random draw in the simulator comes from ChaCha8 (`rand_chacha::ChaCha8Rng`),
//! seeded with the experiment seed and split into independent streams by purpose.
//! Two runs that share a seed therefore see the same data, the same device placement and
//! the same candidate draws regardless of which aggregation rule they use.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Purpose tag for an RNG stream. The discriminant is the ChaCha stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Dataset = 1,
    Partition = 2,
    ModelInit = 3,
    Deployment = 4,
    Channels = 5,
    Selection = 6,
    Assignment = 7,
    DeviceParams = 8,
}

/// Builds the generator for `stream` under `seed`.
pub fn stream(seed: u64, stream: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Plain seeded generator on stream 0.
pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}
