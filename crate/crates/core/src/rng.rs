//! Seeded random streams, one per purpose, so that e.g. changing the number
//! of dropout draws never shifts the shuffle order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Init,
    Shuffle,
    Dropout,
    Noise,
    Synth,
}

impl Purpose {
    fn code(self) -> u64 {
        match self {
            Purpose::Init => 1,
            Purpose::Shuffle => 2,
            Purpose::Dropout => 3,
            Purpose::Noise => 4,
            Purpose::Synth => 5,
        }
    }
}

/// A reproducible generator labelled by `(seed, purpose, counter)`.
///
/// Each label maps to its own ChaCha stream; `counter` selects a sub-stream
/// (a dropout mask id, a sweep point, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomStream {
    pub seed: u64,
    pub purpose: Purpose,
    pub counter: u64,
}

impl RandomStream {
    pub fn new(seed: u64, purpose: Purpose) -> Self {
        RandomStream {
            seed,
            purpose,
            counter: 0,
        }
    }

    /// The same label with a different sub-stream.
    pub fn sub(self, counter: u64) -> Self {
        RandomStream { counter, ..self }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        // purpose in the high bits, counter in the low 56
        rng.set_stream((self.purpose.code() << 56) ^ (self.counter & ((1 << 56) - 1)));
        rng
    }
}
