//! Seed derivation. Every random draw comes from a ChaCha8 generator
//! seeded with a run seed (plus a fold or feature offset) on one of these
//! streams, so independent consumers never share a sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Parameter initialization. Same as `ChaCha8Rng::seed_from_u64(seed)`.
pub const STREAM_INIT: u64 = 0;
pub const STREAM_SHUFFLE: u64 = 1;
pub const STREAM_DROPOUT: u64 = 2;
/// Validation carve inside a training portion.
pub const STREAM_HOLDOUT: u64 = 3;
/// Fold assignment.
pub const STREAM_FOLDS: u64 = 4;
/// Column permutations for importance.
pub const STREAM_PERMUTE: u64 = 5;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
