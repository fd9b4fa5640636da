//! Counter-addressed random streams.
//!
//! Every random decision in the crate is drawn from a stream addressed by
//! `(seed, purpose, index)`. A stream is a ChaCha8 generator keyed by the seed and
//! purpose, positioned on ChaCha stream number `index`, so draw `k` of a dataset
//! never depends on how many draws came before it or on which thread made them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Distinguishes independent uses of the same `(seed, index)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    BankDraw = 1,
    QualityFirstDraw = 2,
    QualityFinalDraw = 3,
    Noise = 4,
    NoiseLevels = 5,
    PredictorSubsample = 6,
    Synthetic = 7,
    Sweep = 8,
}

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(purpose as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
