//! Deterministic, platform-independent randomness.
//!
//! All stochastic behavior in the crate flows through a ChaCha8 stream
//! seeded from a SHA-256 digest of a numeric seed plus a list of string
//! labels. The same (seed, labels) pair yields the same stream on every
//! platform and in every run, which is what makes seeded runs replayable.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use sha2::{Digest, Sha256};

/// Builds a deterministic RNG from a seed and a label path.
///
/// Labels are hashed with a length prefix each, so distinct label lists can
/// never collide by concatenation.
pub fn rng_for(seed: u64, labels: &[&str]) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for label in labels {
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
    }
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// Draws a uniform f64 in [0, 1) using the top 53 bits of one u64, which is
/// exact and identical across platforms.
pub fn uniform01(rng: &mut ChaCha8Rng) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    (rng.next_u64() >> 11) as f64 * SCALE
}

/// Draws an index from a discrete distribution given as (weight) slices,
/// by inverse CDF over the given order. Weights must be non-negative and
/// sum to roughly one; any residual mass lands on the last entry.
pub fn draw_index(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    debug_assert!(!weights.is_empty());
    let u = uniform01(rng);
    let mut cumulative = 0.0;
    for (i, w) in weights.iter().enumerate() {
        cumulative += w;
        if u < cumulative {
            return i;
        }
    }
    weights.len() - 1
}

/// In-place Fisher-Yates shuffle driven by the given RNG. Hand-rolled so
/// the permutation for a given seed is pinned by this crate, not by a
/// library's internal sampling strategy.
pub fn shuffle<T>(rng: &mut ChaCha8Rng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        items.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_inputs_same_stream() {
        let mut a = rng_for(7, &["alpha", "beta"]);
        let mut b = rng_for(7, &["alpha", "beta"]);
        for _ in 0..8 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn label_boundaries_matter() {
        let mut joined = rng_for(7, &["alphabeta"]);
        let mut split = rng_for(7, &["alpha", "beta"]);
        assert_ne!(joined.next_u64(), split.next_u64());
    }

    #[test]
    fn uniform01_stays_in_range() {
        let mut rng = rng_for(1, &["u"]);
        for _ in 0..1000 {
            let u = uniform01(&mut rng);
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn draw_index_is_roughly_proportional() {
        let mut rng = rng_for(2, &["draw"]);
        let weights = [0.6, 0.2, 0.2];
        let mut counts = [0u32; 3];
        for _ in 0..20_000 {
            counts[draw_index(&mut rng, &weights)] += 1;
        }
        assert!((counts[0] as f64 / 20_000.0 - 0.6).abs() < 0.02);
        assert!((counts[1] as f64 / 20_000.0 - 0.2).abs() < 0.02);
    }

    #[test]
    fn shuffle_is_deterministic_per_seed() {
        let mut items_a: Vec<u32> = (0..10).collect();
        let mut items_b: Vec<u32> = (0..10).collect();
        shuffle(&mut rng_for(3, &["s"]), &mut items_a);
        shuffle(&mut rng_for(3, &["s"]), &mut items_b);
        assert_eq!(items_a, items_b);

        let mut items_c: Vec<u32> = (0..10).collect();
        shuffle(&mut rng_for(4, &["s"]), &mut items_c);
        assert_ne!(items_a, items_c);
    }
}
