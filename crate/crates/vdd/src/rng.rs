//! Seedable, splittable randomness.
//!
//! Every stochastic routine in this crate takes an explicit generator.
//! Parallel work (sample trajectories, synthetic cases) gets independent
//! streams of one ChaCha generator, so results depend only on
//! `(seed, stream index)` and never on scheduling or call order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The crate-wide RNG. ChaCha8 is deterministic across platforms.
pub type Rng = ChaCha8Rng;

/// Root generator for a run.
pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `index` of the generator family identified by `seed`.
///
/// Streams are pairwise independent for distinct indices; `split(s, 0)`
/// is NOT the same stream as `seeded(s)` consumed sequentially.
pub fn split(seed: u64, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_add(1));
    rng
}

/// One standard-normal draw.
pub fn standard_normal(rng: &mut Rng) -> f64 {
    use rand::Rng as _;
    rng.sample::<f64, _>(rand_distr::StandardNormal)
}
