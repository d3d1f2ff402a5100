//! Named, seed-derived random streams.
//!
//! Every consumer of randomness asks for `(seed, purpose, index)` and gets
//! its own ChaCha stream, so results never depend on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    /// Innovations of a synthetic AR(1) replication.
    Ar1 = 1,
    /// Uniform draws of one scenario path.
    ScenarioPath = 2,
    /// Per-window simulation seeds in rolling evaluations.
    Window = 3,
}

pub fn substream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 56) ^ index);
    rng
}
