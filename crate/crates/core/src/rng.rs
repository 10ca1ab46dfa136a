//! Seed splitting.
//!
//! Every random consumer draws from its own ChaCha stream derived from one
//! 64-bit run seed and a stream label, so adding a consumer never perturbs
//! the draws seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type Rng = ChaCha12Rng;

/// Named stream identifiers used across the crate.
pub mod streams {
    pub const SYNTHETIC: u64 = 1;
    pub const INIT_LAG: u64 = 2;
    pub const INIT_CLEANER: u64 = 3;
    pub const INIT_VOL: u64 = 4;
    pub const TRAIN_SAMPLES: u64 = 5;
    pub const VALIDATION: u64 = 6;
    pub const BACKTEST: u64 = 7;
    pub const AO_CALIBRATION: u64 = 8;
    pub const MONTE_CARLO: u64 = 9;
}

/// Independent generator for `(seed, stream)`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Sub-stream for the `index`-th replica of a stream (replications, samples).
pub fn substream(seed: u64, stream: u64, index: u64) -> Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream);
    rng
}
