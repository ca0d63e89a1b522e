//! Seeded random streams.
//!
//! Every random draw in a run comes from a ChaCha8 generator keyed by the run
//! seed and a stream identifier, so independent consumers (initialization,
//! action noise, shuffling, resets) never share state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream identifiers used by the trainer.
pub mod streams {
    pub const ACTOR_INIT: u64 = 1;
    pub const CRITIC_INIT: u64 = 2;
    pub const ACTIONS: u64 = 3;
    pub const RESETS: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const EVAL: u64 = 6;
}

/// Generator for `(seed, stream)`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generator for `(seed, stream, a, b)`, e.g. the shuffle order of pass `b` in epoch `a`.
pub fn substream(seed: u64, stream: u64, a: u64, b: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream.wrapping_mul(0x1_0000_0000).wrapping_add(b));
    rng
}
