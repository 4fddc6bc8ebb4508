//! Splitter selection: the adaptive multi-round histogram scheme, a
//! fixed-budget variant, and the single-round sample-sort benchmark.

mod run;
mod state;

pub use run::{
    bucket_sizes_from_ranks, per_key_probability, run_histogram_partitioning, run_hss_fixed,
    run_sample_sort, sample_round, verify_balance, FallbackPolicy, InvariantCounts,
    PartitionError, PartitionResult, PartitionerConfig, RoundReport, RunTrace,
    SampleSortOutcome,
};
pub use state::{GammaSet, SplitterState, StateError, UpdateSummary};
