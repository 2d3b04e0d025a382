use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Portable seeded generator used by every stochastic routine.
pub type Rng64 = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}
