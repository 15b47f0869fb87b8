//! Seed derivation and named random substreams.
//!
//! Every random purpose draws from its own ChaCha stream keyed by the
//! replicate seed, so changing the policy never perturbs arrivals.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose of a random substream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    ArrivalTimes = 1,
    Class = 2,
    Passengers = 3,
    Imperfection = 4,
    Access = 5,
    Compliance = 6,
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one replicate; stable across releases and independent of policy.
pub fn replicate_seed(master_seed: u64, replicate: u32) -> u64 {
    mix64(mix64(master_seed) ^ mix64(u64::from(replicate).wrapping_add(0xA5A5_A5A5)))
}

pub fn substream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Substream whose key additionally depends on `salt` (e.g. a CAV proportion).
pub fn salted_substream(seed: u64, stream: Stream, salt: u64) -> ChaCha8Rng {
    substream(mix64(seed ^ mix64(salt)), stream)
}
