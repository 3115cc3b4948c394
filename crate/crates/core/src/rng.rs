//! Deterministic random streams.
//!
//! Every stochastic quantity in the crate is drawn from a ChaCha8 stream that is
//! addressed by `(master seed, domain, index)`. Replicas never share a stream, so
//! results do not depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used for all simulation.
pub type SimRng = ChaCha8Rng;

/// Separates the uses of one master seed so that, e.g., path 7 and
/// environment sample 7 do not read the same numbers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Domain {
    /// Per-site draws of an i.i.d. environment.
    Sites = 1,
    /// Independent ladder paths.
    Paths = 2,
    /// Long fixed-horizon trajectories.
    Trajectories = 3,
    /// Environment realizations drawn from a law.
    Environments = 4,
    /// Environment-chain kernel steps.
    Kernel = 5,
    /// Per-shift batches of the density estimator.
    DensityShifts = 6,
}

impl Domain {
    fn salt(self) -> u64 {
        (self as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }
}

/// Stream `index` of `domain` under `seed`.
pub fn stream(seed: u64, domain: Domain, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ domain.salt());
    rng.set_stream(index);
    rng
}

/// Derive a child seed, e.g. the seed of the `index`-th sampled environment.
pub fn child_seed(seed: u64, domain: Domain, index: u64) -> u64 {
    use rand::RngCore;
    stream(seed, domain, index).next_u64()
}
