//! Seeded random streams.
//!
//! Every stochastic routine takes an explicit seed and draws from
//! [`ChaCha8Rng`]. Independent streams for the same seed (one per episode,
//! one per instance, ...) are obtained with [`stream`], which selects one of
//! the 2^64 ChaCha streams instead of hashing seeds together, so two
//! streams never overlap.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type FairRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> FairRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream `index` of the generator keyed by `seed`.
pub fn stream(seed: u64, index: u64) -> FairRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws an index from a probability vector by inverse CDF. The last index
/// with positive mass absorbs any rounding slack.
pub(crate) fn categorical<R: rand::Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}
