//! Seed derivation for scheduling-independent determinism.
//!
//! Every unit of parallel work (one generator on one instance of one
//! dataset) derives its own RNG from a chain of the global seed and string
//! labels, so results never depend on worker count or execution order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x1000_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Finalizer from splitmix64; decorrelates nearby seeds.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a root seed and a list of labels.
///
/// The labels are hashed with a separator so `["ab", "c"]` and `["a", "bc"]`
/// map to different seeds.
pub fn chain_seed(root: u64, labels: &[&str]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in root.to_le_bytes().iter() {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    for label in labels {
        for &b in label.as_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
        h ^= 0xff;
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(h)
}

pub fn seeded_rng(root: u64, labels: &[&str]) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(chain_seed(root, labels))
}
