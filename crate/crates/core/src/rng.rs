//! Seeded randomness shared by every stochastic step of the pipeline.
//!
//! All shuffles go through [`shuffle`], a Fisher–Yates pass whose index draw
//! is `(next_u64 as u128 * bound as u128) >> 64` (Lemire's multiply-shift).
//! Keeping the draw explicit pins split membership and batch order to this
//! crate rather than to a particular `rand` release.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_xoshiro::Xoshiro256StarStar;

/// 64-bit FNV-1a. Stable across platforms and releases.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// The PRNG used to shuffle one language stratum during splitting.
pub fn stratum_rng(seed: u64, language: &str) -> Xoshiro256StarStar {
    Xoshiro256StarStar::seed_from_u64(seed ^ fnv1a64(language.as_bytes()))
}

/// A named, independent stream derived from a run seed. Streams with distinct
/// `(domain, index)` pairs do not overlap in practice.
pub fn stream(seed: u64, domain: &str, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(domain.as_bytes()));
    rng.set_stream(index);
    rng
}

/// Uniform index in `0..bound`. `bound` must be non-zero.
pub fn index<R: RngCore + ?Sized>(rng: &mut R, bound: usize) -> usize {
    debug_assert!(bound > 0);
    ((u128::from(rng.next_u64()) * bound as u128) >> 64) as usize
}

pub fn shuffle<T, R: RngCore + ?Sized>(rng: &mut R, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = index(rng, i + 1);
        items.swap(i, j);
    }
}
