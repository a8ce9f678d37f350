//! Counter-based random substreams.
//!
//! Every `(face, ray)` pair owns a fixed window of the ChaCha8 keystream:
//! the master seed selects the key, the face index selects the stream and the
//! ray index selects the word offset. A ray therefore draws the same numbers
//! no matter which worker traces it or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 32-bit words reserved per ray; a ray at the bounce cap uses well under 1000.
const WORDS_PER_RAY: u128 = 1 << 16;

#[derive(Debug, Clone)]
pub struct Substreams {
    base: ChaCha8Rng,
}

impl Substreams {
    pub fn new(master_seed: u64) -> Self {
        Substreams {
            base: ChaCha8Rng::seed_from_u64(master_seed),
        }
    }

    /// Generator positioned at the start of the window for `(stream, index)`.
    pub fn stream(&self, stream: u64, index: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(stream);
        rng.set_word_pos(index as u128 * WORDS_PER_RAY);
        rng
    }
}
