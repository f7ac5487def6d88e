//! Deterministic pool bookkeeping.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{CoreError, Result};
use crate::seeds;
use crate::types::{PoolState, VideoExample};

/// Split a pool into an initial labeled set and the remaining unlabeled set.
///
/// The labeled set holds `round(fraction * |pool|)` ids picked by a seeded
/// Fisher-Yates shuffle over the ids sorted ascending, so the split is a pure
/// function of (sorted ids, fraction, seed).
pub fn seed_split(pool: &[VideoExample], fraction: f64, seed: u64) -> Result<PoolState> {
    if pool.is_empty() {
        return Err(CoreError::data("cannot split an empty pool"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(CoreError::InvalidConfig(format!(
            "seed fraction must be in (0, 1], got {fraction}"
        )));
    }
    let mut ids: Vec<String> = pool.iter().map(|v| v.id.clone()).collect();
    ids.sort();
    ids.dedup();
    if ids.len() != pool.len() {
        return Err(CoreError::data("pool contains duplicate ids"));
    }

    let take = (fraction * ids.len() as f64).round() as usize;
    let take = take.clamp(1, ids.len());

    let mut rng = ChaCha20Rng::seed_from_u64(seeds::mix(&[seed, seeds::hash_str("seed_split")]));
    ids.shuffle(&mut rng);

    let labeled: BTreeSet<String> = ids[..take].iter().cloned().collect();
    let unlabeled: BTreeSet<String> = ids[take..].iter().cloned().collect();
    PoolState::new(labeled, unlabeled)
}

/// Per-iteration query sizes: the total budget `floor(iterations * step *
/// |pool|)` is divided as floor(B / iterations) per iteration with the
/// remainder appended to the last one, so the budget is spent exactly.
pub fn iteration_budgets(pool_size: usize, step_fraction: f64, iterations: u32) -> Vec<usize> {
    if iterations == 0 {
        return Vec::new();
    }
    let total = (f64::from(iterations) * step_fraction * pool_size as f64).floor() as usize;
    let per = total / iterations as usize;
    let mut budgets = vec![per; iterations as usize];
    let spent = per * iterations as usize;
    *budgets.last_mut().expect("iterations > 0") += total - spent;
    budgets
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(n: usize) -> Vec<VideoExample> {
        (0..n)
            .map(|i| VideoExample {
                id: format!("vid_{i:04}"),
                visual_feature: vec![i as f64],
                references: None,
            })
            .collect()
    }

    #[test]
    fn split_sizes_follow_rounding() {
        let state = seed_split(&pool(200), 0.05, 7).unwrap();
        assert_eq!(state.labeled.len(), 10);
        assert_eq!(state.unlabeled.len(), 190);
    }

    #[test]
    fn full_fraction_labels_everything() {
        let state = seed_split(&pool(12), 1.0, 3).unwrap();
        assert_eq!(state.labeled.len(), 12);
        assert!(state.unlabeled.is_empty());
    }

    #[test]
    fn split_is_deterministic() {
        let a = seed_split(&pool(50), 0.2, 42).unwrap();
        let b = seed_split(&pool(50), 0.2, 42).unwrap();
        assert_eq!(a, b);
        let c = seed_split(&pool(50), 0.2, 43).unwrap();
        assert_ne!(a.labeled, c.labeled);
    }

    #[test]
    fn split_ignores_input_order() {
        let mut shuffled = pool(30);
        shuffled.reverse();
        let a = seed_split(&pool(30), 0.3, 9).unwrap();
        let b = seed_split(&shuffled, 0.3, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_pool_is_an_error() {
        assert!(seed_split(&[], 0.5, 0).is_err());
    }

    #[test]
    fn budgets_floor_with_remainder_last() {
        assert_eq!(iteration_budgets(200, 0.05, 4), vec![10, 10, 10, 10]);
        // 4 * 0.05 * 205 = 41 total -> 10 per iteration, 11 in the last.
        assert_eq!(iteration_budgets(205, 0.05, 4), vec![10, 10, 10, 11]);
        assert!(iteration_budgets(200, 0.05, 0).is_empty());
    }
}
