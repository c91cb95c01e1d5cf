//! Stable keyed hashing. All engine randomness is derived from these, so the
//! values must never change between releases or platforms.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Keyed 64-bit hash of a byte string.
pub fn hash64(key: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET ^ mix64(key);
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    mix64(h ^ (bytes.len() as u64))
}

/// Per-image caption seed. Depends only on the global seed and the uid, so
/// shard order never changes generated captions.
pub fn sample_seed(global_seed: u64, uid: &str) -> u64 {
    hash64(global_seed, uid.as_bytes())
}

/// 128-bit fingerprint used for duplicate detection over unsorted streams.
pub fn fingerprint128(bytes: &[u8]) -> u128 {
    let hi = hash64(0x5349_4556_0000_0001, bytes);
    let lo = hash64(0x5349_4556_0000_0002, bytes);
    (u128::from(hi) << 64) | u128::from(lo)
}
