//! Simulator for histogram-based splitter selection in bulk-synchronous
//! parallel (BSP) sorting.
//!
//! The library models `p` processors holding `N` distinct keys and drives
//! multi-round sampling + histogramming to find `p-1` splitters whose bucket
//! sizes are within a `(1+epsilon)` factor of the ideal `N/p`. Everything is
//! seeded and deterministic: a run is a pure function of its inputs, and the
//! communication cost of every superstep is recorded in a ledger.

pub mod bsp;
pub mod cli;
pub mod core_math;
pub mod keyspace;
pub mod partitioner;
pub mod sorter;

pub use bsp::{BspHarness, CostLedger, SuperstepRecord};
pub use cli::{
    cmd_adversarial_audit, cmd_partition, cmd_runsstats, cmd_sort, cmd_sweep, records_to_json,
    rows_to_csv, Algo, CliError, ExperimentSpec, ResultRow, TrialRecord, Workload,
};
pub use core_math::{
    falling_factorial, log_star, runs_enumeration_oracle, runs_expectation, runs_monte_carlo,
    runs_variance, CoreMathError, RunsModel,
};
pub use keyspace::{
    audit_adversarial, AdversarialAudit, AdversarialParams, GlobalInput, KeyspaceError, LayoutTag,
    RankOracle, SkewMode,
};
pub use partitioner::{
    per_key_probability, run_histogram_partitioning, run_hss_fixed, run_sample_sort,
    verify_balance, FallbackPolicy, GammaSet, PartitionError, PartitionResult, PartitionerConfig,
    SampleSortOutcome, SplitterState,
};
pub use sorter::{exchange_and_sort, verify_sorted, SortError, SortOutcome};
