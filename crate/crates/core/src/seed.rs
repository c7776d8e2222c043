//! Stable seed derivation.
//!
//! `std::hash` gives no cross-version guarantee, so per-agent RNG streams are
//! derived with FNV-1a over the agent id mixed through splitmix64.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one named stream under a scene seed. `attempt` separates the
/// re-samples used by collision repair.
pub fn derive(seed: u64, label: &str, attempt: u32) -> u64 {
    let h = splitmix64(seed ^ fnv1a(label.as_bytes()));
    splitmix64(h ^ u64::from(attempt).wrapping_mul(0xd6e8_feb8_6659_fd93))
}

pub fn stream(seed: u64, label: &str, attempt: u32) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, label, attempt))
}
