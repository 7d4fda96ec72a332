//! Seeded random streams. Every consumer owns its own stream so that adding
//! draws in one subsystem never shifts another's sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Named stream identifiers, mixed into the seed's stream selector.
pub mod ids {
    pub const WHEELS: u64 = 1;
    pub const SENSORS: u64 = 2;
    pub const TERRAIN: u64 = 3;
    pub const TRAINING: u64 = 4;
    pub const DATAGEN: u64 = 5;
}

pub fn stream(seed: u64, id: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
