//! Named random streams derived from one master seed.
//!
//! Every stochastic draw in a run comes from a stream keyed by
//! `(purpose, index)`, so changing how many draws one purpose consumes never
//! shifts another purpose's sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    InitialTruth = 1,
    InitialBelief = 2,
    Control = 3,
    ProcessNoise = 4,
    Sensing = 5,
    LandmarkSensing = 6,
    StationarySelection = 7,
}

/// Independent ChaCha stream for `purpose`; `index` is a robot id, epoch
/// number or similar.
pub fn stream(master_seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((purpose as u64) << 56) ^ index);
    rng
}
