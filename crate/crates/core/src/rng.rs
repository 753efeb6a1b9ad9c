//! Deterministic seed derivation and per-sample RNG streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream whose seed is
//! derived from a master seed plus a domain tag (and, for channel samples,
//! the sample id). Generation order and parallelism therefore never change
//! values: the stream for sample `s` is a pure function of `(seed, s)`.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Identifier of the base generator algorithm, recorded in dataset headers
/// and run manifests so files remain attributable to the scheme that
/// produced them.
pub const RNG_ALGO_ID: u8 = 1; // 1 = splitmix64 key mixing + ChaCha8 streams

/// Seed-derivation domains. Keeping strategies on disjoint domains means a
/// run's draws do not depend on which other runs execute.
pub mod domain {
    pub const CHANNEL: u64 = 0x01;
    pub const POLICY_INIT: u64 = 0x02;
    pub const TRAIN: u64 = 0x03;
    pub const SHUFFLE: u64 = 0x04;
    pub const RESERVOIR: u64 = 0x05;
}

/// SplitMix64 finalizer; good bit diffusion for key mixing.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a sub-seed from a master seed and a domain/counter key.
pub fn derive_seed(master: u64, key: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(key))
}

/// Counter-based stream for one channel sample: pure function of
/// `(master_seed, sample_id)`. Fields are drawn from the stream in a fixed
/// documented order by each generator.
pub fn sample_rng(master_seed: u64, sample_id: u64) -> ChaCha8Rng {
    let channel_key = derive_seed(master_seed, domain::CHANNEL);
    ChaCha8Rng::seed_from_u64(derive_seed(channel_key, sample_id))
}

/// Stream for a named domain (policy init, training shuffles, ...).
pub fn domain_rng(master_seed: u64, dom: u64, sub: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(derive_seed(master_seed, dom), sub))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn derivation_is_deterministic() {
        assert_eq!(derive_seed(42, 7), derive_seed(42, 7));
        assert_ne!(derive_seed(42, 7), derive_seed(42, 8));
        assert_ne!(derive_seed(42, 7), derive_seed(43, 7));
    }

    #[test]
    fn sample_streams_are_independent_of_order() {
        let mut a = sample_rng(1234, 10);
        let first = a.next_u64();
        // drawing sample 9 first must not affect sample 10's stream
        let mut b9 = sample_rng(1234, 9);
        let _ = b9.next_u64();
        let mut b = sample_rng(1234, 10);
        assert_eq!(first, b.next_u64());
    }
}
