//! Seeding rules.
//!
//! Every stochastic routine takes an explicit `&mut SimRng`. A run derives one
//! ChaCha8 stream per pipeline stage from its run seed, so the random draws of
//! one stage never depend on how many draws another stage consumed.
//!
//! Sweep points get their run seed from [`split_seed`]:
//!
//! ```text
//! run_seed = splitmix64(master ^ splitmix64(point_index + 1))
//! ```
//!
//! The rule is part of the public contract; changing it changes every report.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Pipeline stages, each with its own ChaCha stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stage {
    Emission = 0,
    SignalLoss = 1,
    IdlerLoss = 2,
    HeraldDetector = 3,
    Switch = 4,
    IdlerDetector = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the run seed of sweep point `index` from a master seed.
pub fn split_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index.wrapping_add(1)))
}

/// A generator seeded directly from `seed`, for standalone use.
pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// The stream used by `stage` within the run seeded by `seed`.
pub fn stage_rng(seed: u64, stage: Stage) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(stage as u64);
    rng
}
