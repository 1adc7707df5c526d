//! Fixed inputs shared by the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use maskbc::instances::{random_spec, random_strategy};
use maskbc::{ChannelSpec, Strategy};

/// Degraded random channel of dimension `t` with a strictly feasible strategy.
pub fn fixture(t: usize, seed: u64) -> (ChannelSpec, Strategy) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = random_spec(&mut rng, t, true);
    let strat = random_strategy(&mut rng, &spec);
    (spec, strat)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_reproducible() {
        assert_eq!(fixture(3, 7).1, fixture(3, 7).1);
        assert!(fixture(2, 1).0.degraded());
    }
}
