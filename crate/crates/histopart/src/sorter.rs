//! The final sorting step: route every key to the bucket its splitters
//! dictate, sort locally, and verify the global order.
//!
//! Bucket rule: key `x` belongs to bucket `i` (0-based) when
//! `s_i < x <= s_(i+1)` with the 1-based splitters `s_1..s_(p-1)` and the
//! virtual sentinels `s_0 = -inf`, `s_p = +inf`. Equal adjacent splitters
//! simply produce an empty bucket.

use crate::keyspace::GlobalInput;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SortError {
    #[error("expected {expected} splitters, got {got}")]
    WrongSplitterCount { expected: usize, got: usize },
    #[error("splitter keys must be sorted (position {0})")]
    UnsortedSplitters(usize),
}

/// Result of the exchange: bucket contents plus the traffic it took.
#[derive(Debug, Clone, Serialize)]
pub struct SortOutcome {
    /// Sorted keys per destination processor.
    pub per_proc: Vec<Vec<u64>>,
    /// Largest bucket.
    pub max_load: u64,
    /// Keys whose destination differs from their origin processor.
    pub exchange_volume: u64,
    /// Concatenation of the buckets is globally ascending.
    pub globally_sorted: bool,
}

/// Route all keys to their buckets, count the cross-processor traffic, sort
/// each bucket, and check the global order.
pub fn exchange_and_sort(
    input: &GlobalInput,
    splitter_keys: &[u64],
) -> Result<SortOutcome, SortError> {
    let p = input.p();
    if splitter_keys.len() != p - 1 {
        return Err(SortError::WrongSplitterCount { expected: p - 1, got: splitter_keys.len() });
    }
    if let Some(pos) = splitter_keys.windows(2).position(|w| w[0] > w[1]) {
        return Err(SortError::UnsortedSplitters(pos + 1));
    }
    let mut per_proc: Vec<Vec<u64>> = vec![Vec::new(); p];
    let mut exchange_volume = 0u64;
    for origin in 0..p {
        for &key in input.local_keys(origin).expect("validated processor index") {
            // First bucket whose upper splitter is >= key.
            let dest = splitter_keys.partition_point(|&s| s < key);
            if dest != origin {
                exchange_volume += 1;
            }
            per_proc[dest].push(key);
        }
    }
    for bucket in &mut per_proc {
        bucket.sort_unstable();
    }
    let max_load = per_proc.iter().map(|b| b.len() as u64).max().unwrap_or(0);
    let globally_sorted = per_proc
        .iter()
        .flatten()
        .copied()
        .collect::<Vec<u64>>()
        .windows(2)
        .all(|w| w[0] < w[1]);
    Ok(SortOutcome { per_proc, max_load, exchange_volume, globally_sorted })
}

/// The outcome is correct iff concatenating the buckets reproduces the
/// sorted key universe exactly.
pub fn verify_sorted(outcome: &SortOutcome, input: &GlobalInput) -> bool {
    let flat: Vec<u64> = outcome.per_proc.iter().flatten().copied().collect();
    flat == input.universe()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keyspace::{AdversarialParams, GlobalInput};
    use crate::partitioner::{run_histogram_partitioning, PartitionerConfig};
    use proptest::prelude::*;

    #[test]
    fn exchange_routes_by_the_bucket_rule() {
        let input = GlobalInput::gen_uniform(16, 4, 3).unwrap();
        let oracle = input.rank_oracle();
        // Perfect splitters at ranks 4, 8, 12.
        let splitters: Vec<u64> = [4u64, 8, 12]
            .iter()
            .map(|&r| oracle.key_of_rank(r).unwrap())
            .collect();
        let outcome = exchange_and_sort(&input, &splitters).unwrap();
        assert!(outcome.globally_sorted);
        assert!(verify_sorted(&outcome, &input));
        assert_eq!(outcome.max_load, 4);
        for (i, bucket) in outcome.per_proc.iter().enumerate() {
            assert_eq!(bucket.len(), 4, "bucket {i}");
        }
        // A splitter key itself goes to the bucket it closes.
        let s1 = splitters[0];
        assert!(outcome.per_proc[0].contains(&s1));
    }

    #[test]
    fn exchange_volume_counts_movers_only() {
        // Pre-sorted blocks with perfect splitters: nothing moves.
        let input = GlobalInput::gen_skewed(16, 4, crate::keyspace::SkewMode::SortedBlocks, 5)
            .unwrap();
        let oracle = input.rank_oracle();
        let splitters: Vec<u64> = [4u64, 8, 12]
            .iter()
            .map(|&r| oracle.key_of_rank(r).unwrap())
            .collect();
        let outcome = exchange_and_sort(&input, &splitters).unwrap();
        assert_eq!(outcome.exchange_volume, 0);
        assert!(outcome.globally_sorted);
        // A uniform deal moves roughly (p-1)/p of all keys; at the very
        // least, someone moves.
        let shuffled = GlobalInput::gen_uniform(16, 4, 5).unwrap();
        let oracle = shuffled.rank_oracle();
        let splitters: Vec<u64> = [4u64, 8, 12]
            .iter()
            .map(|&r| oracle.key_of_rank(r).unwrap())
            .collect();
        let outcome = exchange_and_sort(&shuffled, &splitters).unwrap();
        assert!(outcome.exchange_volume > 0);
        assert!(verify_sorted(&outcome, &shuffled));
    }

    #[test]
    fn empty_buckets_are_legal() {
        let input = GlobalInput::gen_uniform(16, 4, 7).unwrap();
        let oracle = input.rank_oracle();
        // Duplicate splitter key: bucket between the two copies is empty.
        let s = oracle.key_of_rank(8).unwrap();
        let splitters = vec![s, s, oracle.key_of_rank(12).unwrap()];
        let outcome = exchange_and_sort(&input, &splitters).unwrap();
        assert!(outcome.per_proc[1].is_empty());
        assert!(outcome.globally_sorted);
        assert!(verify_sorted(&outcome, &input));
    }

    #[test]
    fn splitter_validation() {
        let input = GlobalInput::gen_uniform(16, 4, 7).unwrap();
        assert!(matches!(
            exchange_and_sort(&input, &[1, 2]),
            Err(SortError::WrongSplitterCount { expected: 3, got: 2 })
        ));
        assert!(matches!(
            exchange_and_sort(&input, &[5, 3, 9]),
            Err(SortError::UnsortedSplitters(1))
        ));
    }

    #[test]
    fn verify_sorted_detects_a_swap() {
        let input = GlobalInput::gen_uniform(16, 4, 9).unwrap();
        let oracle = input.rank_oracle();
        let splitters: Vec<u64> = [4u64, 8, 12]
            .iter()
            .map(|&r| oracle.key_of_rank(r).unwrap())
            .collect();
        let mut outcome = exchange_and_sort(&input, &splitters).unwrap();
        assert!(verify_sorted(&outcome, &input));
        // Swap two adjacent keys across buckets.
        let a = outcome.per_proc[0].pop().unwrap();
        let b = outcome.per_proc[1].remove(0);
        outcome.per_proc[0].push(b);
        outcome.per_proc[1].insert(0, a);
        assert!(!verify_sorted(&outcome, &input));
    }

    #[test]
    fn end_to_end_with_found_splitters() {
        for seed in 0..5u64 {
            let input =
                GlobalInput::gen_adversarial(4096, 16, AdversarialParams { c: 4 }, seed).unwrap();
            let config = PartitionerConfig { seed, ..PartitionerConfig::default() };
            let partition = run_histogram_partitioning(&input, &config).unwrap();
            let outcome = exchange_and_sort(&input, &partition.splitter_keys).unwrap();
            assert!(outcome.globally_sorted, "seed {seed}");
            assert!(verify_sorted(&outcome, &input), "seed {seed}");
            assert!(outcome.max_load <= 2 * 4096 / 16, "seed {seed}: {}", outcome.max_load);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

        #[test]
        fn exchange_preserves_the_multiset(seed in 0u64..10_000) {
            let input = GlobalInput::gen_uniform(256, 8, seed).unwrap();
            let oracle = input.rank_oracle();
            let splitters: Vec<u64> = (1..8u64)
                .map(|j| oracle.key_of_rank(j * 32).unwrap())
                .collect();
            let outcome = exchange_and_sort(&input, &splitters).unwrap();
            prop_assert!(verify_sorted(&outcome, &input));
            let total: usize = outcome.per_proc.iter().map(Vec::len).sum();
            prop_assert_eq!(total, 256);
        }
    }
}
