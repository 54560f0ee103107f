//! Deterministic random streams.
//!
//! Every repetition of an experiment draws from its own ChaCha stream whose
//! key is the master seed and whose stream id is a hash of the strategy label
//! and the repetition index. Streams never depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random stream type used throughout the crate.
pub type RngStream = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over the label bytes, then mixed. Stable across platforms and
/// compiler versions, unlike `DefaultHasher`.
pub fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix64(h)
}

/// A fresh stream seeded only by `seed`.
pub fn stream(seed: u64) -> RngStream {
    RngStream::seed_from_u64(seed)
}

/// Independent stream for `(master_seed, label, index)`.
pub fn substream(master_seed: u64, label: &str, index: u64) -> RngStream {
    let mut rng = RngStream::seed_from_u64(master_seed);
    rng.set_stream(mix64(label_hash(label) ^ mix64(index)));
    rng
}
