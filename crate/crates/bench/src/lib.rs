//! Fixtures shared by the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use swarmkin_core::EnsembleState;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` uniformly drawn phases.
pub fn uniform_state(n: usize, seed: u64) -> EnsembleState {
    EnsembleState::uniform(n, &mut rng(seed)).expect("n >= 2")
}
