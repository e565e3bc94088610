//! Counter-based random streams.
//!
//! Every Monte-Carlo path `i` of an experiment with master seed `s` draws from
//! ChaCha8 keyed by `s` on stream `i`. The stream of a path depends only on
//! `(s, i)`, never on how paths are distributed over worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type PathRng = ChaCha8Rng;

pub fn path_rng(seed: u64, stream: u64) -> PathRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
