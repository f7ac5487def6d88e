//! Stable 64-bit hashing for deriving sub-seeds.
//!
//! Every random decision in the engine is keyed by a seed built from the run
//! seed plus context (iteration, video id, purpose tag), so runs replay
//! exactly and resuming from a checkpoint needs no RNG state beyond these
//! inputs. `std`'s hashers are not stable across releases, so we use FNV-1a
//! with a splitmix finalizer.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over raw bytes.
pub fn hash_bytes(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

pub fn hash_str(s: &str) -> u64 {
    hash_bytes(s.as_bytes())
}

/// splitmix64 finalizer; diffuses low-entropy inputs.
fn finalize(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combine seed parts into one well-mixed seed.
pub fn mix(parts: &[u64]) -> u64 {
    let mut h = FNV_OFFSET;
    for &p in parts {
        for b in p.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    finalize(h)
}

/// Hash an f64 slice by bit pattern (used to key decode behavior on the
/// exact feature vector).
pub fn hash_f64_bits(values: &[f64]) -> u64 {
    let mut h = FNV_OFFSET;
    for v in values {
        for b in v.to_bits().to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    finalize(h)
}
