//! Named random substreams derived from one user seed.
//!
//! Each consumer (splitting, init, training, attacks) draws from its own
//! ChaCha stream so that changing how much randomness one stage uses never
//! shifts another stage's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Split = 1,
    Init = 2,
    Train = 3,
    Attack = 4,
    KeyStar = 5,
    Adversarial = 6,
    Synth = 7,
}

pub fn substream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Stream for one item (e.g. one attacked example) within a substream.
pub fn item_stream(seed: u64, stream: Stream, item: u64) -> ChaCha8Rng {
    let mixed = seed ^ item.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    substream(mixed, stream)
}
