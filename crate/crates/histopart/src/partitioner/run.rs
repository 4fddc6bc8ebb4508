//! The splitter-selection algorithms and their shared machinery.
//!
//! Three drivers share one BSP loop shape:
//! * [`run_histogram_partitioning`] — the adaptive multi-round scheme whose
//!   per-key sampling probability is `min(1, c*p / (|gamma| * log*(p)))`;
//! * [`run_hss_fixed`] — same loop with a fixed per-round sample budget,
//!   probability `min(1, budget / |gamma|)`;
//! * [`run_sample_sort`] — the classic single-round benchmark with
//!   probability `S / n`.
//!
//! Sampling is keyed by global rank: whether the key of rank `r` is sampled
//! in round `i` is a pure function of `(seed, i, r)`. Two inputs over the
//! same key universe therefore sample identical rank sets no matter how the
//! keys are laid out across processors — layout can never leak into the
//! algorithm's decisions, only into who sends what.

use crate::bsp::{BspHarness, CostLedger};
use crate::core_math::log_star;
use crate::keyspace::GlobalInput;
use crate::partitioner::state::{GammaSet, SplitterState, StateError};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error(transparent)]
    State(#[from] StateError),
    #[error("sample constant must be positive and finite, got {0}")]
    BadSampleConstant(f64),
    #[error("round cap must be at least 1")]
    ZeroRoundCap,
    #[error("round cap {cap} reached with {unachieved} splitters open and fallback disabled")]
    RoundCapExceeded { cap: usize, unachieved: usize },
    #[error("oversampled fallback round still left {unachieved} splitters open")]
    FallbackFailed { unachieved: usize },
    #[error("sample size {s} cannot place {needed} splitters")]
    SampleSizeTooSmall { s: u64, needed: usize },
    #[error("sample budget must be at least 1")]
    ZeroBudget,
    #[error(transparent)]
    Keyspace(#[from] crate::keyspace::KeyspaceError),
}

/// What to do when the round cap is reached with splitters still open.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackPolicy {
    /// Run one final round at single-round sample-sort density over the
    /// residual gamma set: `min(1, 3*ln(p)*p / |gamma|)`.
    #[default]
    Oversample,
    /// Give up with an error.
    Fail,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PartitionerConfig {
    /// Balance slack: buckets may hold up to `(1+epsilon) * n/p` keys.
    pub epsilon: f64,
    /// The `c` in the per-key sampling probability.
    pub sample_constant: f64,
    /// Rounds before the fallback engages; `None` means `10 + 10*log*(p)`.
    pub max_rounds_cap: Option<usize>,
    pub fallback: FallbackPolicy,
    /// Whether broadcast traffic counts toward the ledger.
    pub count_broadcast: bool,
    pub seed: u64,
}

impl Default for PartitionerConfig {
    fn default() -> Self {
        PartitionerConfig {
            epsilon: 1.0,
            sample_constant: 3.0,
            max_rounds_cap: None,
            fallback: FallbackPolicy::Oversample,
            count_broadcast: true,
            seed: 0,
        }
    }
}

impl PartitionerConfig {
    fn validate(&self) -> Result<(), PartitionError> {
        if !self.sample_constant.is_finite() || self.sample_constant <= 0.0 {
            return Err(PartitionError::BadSampleConstant(self.sample_constant));
        }
        if self.max_rounds_cap == Some(0) {
            return Err(PartitionError::ZeroRoundCap);
        }
        Ok(())
    }

    /// Effective round cap for a given processor count.
    pub fn cap_for(&self, p: usize) -> usize {
        self.max_rounds_cap
            .unwrap_or_else(|| 10 + 10 * log_star(p as f64).unwrap_or(0) as usize)
    }
}

/// Probability with which each key still in the gamma set is sampled:
/// `min(1, c*p / (|gamma| * log*(p)))`. The expected per-round sample volume
/// is therefore at most `c*p / log*(p)` regardless of how large the gamma
/// set is.
pub fn per_key_probability(gamma_len: u64, p: usize, c: f64) -> f64 {
    let lsp = log_star(p as f64).unwrap_or(0);
    if gamma_len == 0 || lsp == 0 {
        return 1.0;
    }
    (c * p as f64 / (gamma_len as f64 * lsp as f64)).min(1.0)
}

/// SplitMix64 finalizer: the standard 64-bit avalanche used to decorrelate
/// structured inputs (here: consecutive ranks).
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic per-rank coin: rank `r` is sampled in `round` iff the
/// mixed hash of `(seed, round, r)` falls below `q * 2^64`.
fn rank_sampled(seed: u64, round: u32, rank: u64, threshold: u64) -> bool {
    let base = splitmix64(seed ^ (round as u64).wrapping_mul(0xA24B_AED4_963E_E407));
    splitmix64(base ^ rank) < threshold
}

/// Bernoulli-sample every rank in `gamma` with probability `q`, routing each
/// sampled key to the processor that holds it. Returns the per-processor
/// sample lists plus the sampled ranks (sorted — the iteration order).
pub fn sample_round(
    input: &GlobalInput,
    gamma: &GammaSet,
    q: f64,
    round: u32,
    seed: u64,
) -> (Vec<Vec<u64>>, Vec<u64>) {
    let mut per_proc: Vec<Vec<u64>> = vec![Vec::new(); input.p()];
    let mut ranks = Vec::new();
    let take_all = q >= 1.0;
    let threshold = if take_all { u64::MAX } else { (q * 2f64.powi(64)) as u64 };
    let universe = input.universe();
    for &(start, end) in gamma.intervals() {
        for rank in start..end {
            if take_all || rank_sampled(seed, round, rank, threshold) {
                let proc = input.owner_of_rank(rank).expect("gamma ranks are in range");
                per_proc[proc].push(universe[(rank - 1) as usize]);
                ranks.push(rank);
            }
        }
    }
    (per_proc, ranks)
}

/// Communication and progress of one round, as recorded in the run report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundReport {
    pub round: usize,
    /// Splitters still open when the round started.
    pub unachieved_at_start: usize,
    /// Size of the sampling domain when the round started.
    pub gamma_len: u64,
    /// Per-key sampling probability used.
    pub q: f64,
    pub samples: u64,
    pub histogram: u64,
    pub broadcast: u64,
    pub h: u64,
    pub newly_achieved: usize,
    /// Whether `|gamma| <= (2+eps)*k*n/p` held at round start (the
    /// `3*k*n/p` bound at the default eps = 1).
    pub sampleable_bound_ok: bool,
}

/// Pass/fail tally of the per-round sampleable-size invariant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct InvariantCounts {
    pub pass: u32,
    pub fail: u32,
}

/// Per-round artifacts kept in memory for invariance experiments (never
/// serialized into reports).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    /// Sorted sampled ranks, per round.
    pub sampled_ranks: Vec<Vec<u64>>,
    /// Gamma intervals at the start of each round.
    pub gamma: Vec<GammaSet>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PartitionResult {
    /// The `p-1` splitter keys, sorted.
    pub splitter_keys: Vec<u64>,
    /// Their global ranks, sorted.
    pub splitter_ranks: Vec<u64>,
    /// Bucket sizes induced by the splitters (length `p`, sums to `n`).
    pub bucket_sizes: Vec<u64>,
    /// Largest bucket relative to the ideal `n/p`.
    pub balance_factor: f64,
    pub rounds: usize,
    pub total_sample_volume: u64,
    /// Largest per-superstep traffic divided by `p`.
    pub kappa: f64,
    pub fallback_used: bool,
    pub sampleable_bound: InvariantCounts,
    pub ledger: CostLedger,
    pub per_round: Vec<RoundReport>,
    #[serde(skip)]
    pub trace: RunTrace,
}

impl PartitionResult {
    /// Flat report for serialization, echoing the algorithm and its
    /// configuration.
    pub fn report(&self, algorithm: &str, config: &PartitionerConfig) -> serde_json::Value {
        serde_json::json!({
            "algorithm": algorithm,
            "config": config,
            "rounds": self.rounds,
            "total_sample_volume": self.total_sample_volume,
            "per_round": self.per_round,
            "splitter_ranks": self.splitter_ranks,
            "balance_factor": self.balance_factor,
            "lemma1_checks": self.sampleable_bound,
            "kappa": self.kappa,
            "fallback_used": self.fallback_used,
            "bucket_sizes": self.bucket_sizes,
            "ledger": self.ledger,
        })
    }
}

/// Outcome of the single-round benchmark: failing to place every splitter is
/// a reportable result, not an error.
#[derive(Debug, Clone, Serialize)]
pub struct SampleSortOutcome {
    pub success: bool,
    /// Per-splitter achievement, index `j-1` for splitter `j`.
    pub per_splitter: Vec<bool>,
    pub achieved_splitters: usize,
    pub sample_volume: u64,
    pub ledger: CostLedger,
    /// Present only when every splitter was achieved.
    pub partition: Option<PartitionResult>,
}

/// How each round of the shared loop picks its sampling probability.
enum Density {
    /// `min(1, c*p / (|gamma| * log* p))`
    Adaptive { c: f64 },
    /// `min(1, budget / |gamma|)`
    FixedBudget { budget: u64 },
}

impl Density {
    fn q(&self, gamma_len: u64, p: usize) -> f64 {
        match *self {
            Density::Adaptive { c } => per_key_probability(gamma_len, p, c),
            Density::FixedBudget { budget } => {
                if gamma_len == 0 {
                    1.0
                } else {
                    (budget as f64 / gamma_len as f64).min(1.0)
                }
            }
        }
    }
}

/// The adaptive multi-round splitter selection.
pub fn run_histogram_partitioning(
    input: &GlobalInput,
    config: &PartitionerConfig,
) -> Result<PartitionResult, PartitionError> {
    config.validate()?;
    run_rounds(input, config, Density::Adaptive { c: config.sample_constant })
}

/// Multi-round selection with a fixed expected sample volume per round.
pub fn run_hss_fixed(
    input: &GlobalInput,
    config: &PartitionerConfig,
    budget: u64,
) -> Result<PartitionResult, PartitionError> {
    config.validate()?;
    if budget == 0 {
        return Err(PartitionError::ZeroBudget);
    }
    run_rounds(input, config, Density::FixedBudget { budget })
}

fn run_rounds(
    input: &GlobalInput,
    config: &PartitionerConfig,
    density: Density,
) -> Result<PartitionResult, PartitionError> {
    let n = input.n();
    let p = input.p();
    let mut state = SplitterState::new(n, p, config.epsilon)?;
    let np = state.ideal_bucket();
    let cap = config.cap_for(p);
    let mut harness = BspHarness::new(config.count_broadcast);
    let mut per_round: Vec<RoundReport> = Vec::new();
    let mut trace = RunTrace::default();
    let mut counts = InvariantCounts::default();
    let mut fallback_used = false;
    loop {
        let gamma = state.compute_gamma();
        let unachieved = state.unachieved_count();
        if unachieved == 0 {
            break;
        }
        let round = per_round.len() + 1;
        if round > cap {
            if fallback_used {
                return Err(PartitionError::FallbackFailed { unachieved });
            }
            match config.fallback {
                FallbackPolicy::Fail => {
                    return Err(PartitionError::RoundCapExceeded { cap, unachieved })
                }
                FallbackPolicy::Oversample => fallback_used = true,
            }
        }
        // Sampleable-size invariant: the domain left for k open splitters
        // can never exceed (2+eps)*k*n/p — each merged interval spans its
        // windows plus at most one ideal bucket of slack per side. At the
        // default eps = 1 this is the classic 3*k*n/p bound.
        let bound = (2.0 + config.epsilon) * (unachieved as u64 * np) as f64;
        let bound_ok = gamma.len() as f64 <= bound;
        debug_assert!(bound_ok, "|gamma| = {} > {bound}", gamma.len());
        if bound_ok {
            counts.pass += 1;
        } else {
            counts.fail += 1;
        }
        let q = if fallback_used && round > cap {
            (3.0 * (p as f64).ln() * p as f64 / gamma.len() as f64).min(1.0)
        } else {
            density.q(gamma.len(), p)
        };
        let (lists, sampled_ranks) = sample_round(input, &gamma, q, round as u32, config.seed);
        let combined = harness.gather_samples(&lists, input);
        let histogram = harness.reduce_histogram(&combined, input);
        let summary = state.update_bounds(&histogram);
        harness.broadcast_state((summary.changed_bounds + summary.newly_achieved) as u64);
        let record = harness.close_superstep();
        per_round.push(RoundReport {
            round,
            unachieved_at_start: unachieved,
            gamma_len: gamma.len(),
            q,
            samples: record.samples_gathered,
            histogram: record.histogram_entries,
            broadcast: record.broadcast_entries,
            h: record.h,
            newly_achieved: summary.newly_achieved,
            sampleable_bound_ok: bound_ok,
        });
        trace.sampled_ranks.push(sampled_ranks);
        trace.gamma.push(gamma);
        if round > cap && !state.all_achieved() {
            return Err(PartitionError::FallbackFailed {
                unachieved: state.unachieved_count(),
            });
        }
    }
    Ok(assemble(&state, harness.into_ledger(), per_round, trace, counts, fallback_used))
}

/// Single-round sample sort: every key is sampled with probability `S / n`,
/// and a splitter is placed only if a sampled rank lands in its window.
pub fn run_sample_sort(
    input: &GlobalInput,
    config: &PartitionerConfig,
    sample_size: u64,
) -> Result<SampleSortOutcome, PartitionError> {
    config.validate()?;
    let n = input.n();
    let p = input.p();
    if sample_size < (p - 1) as u64 {
        return Err(PartitionError::SampleSizeTooSmall { s: sample_size, needed: p - 1 });
    }
    let mut state = SplitterState::new(n, p, config.epsilon)?;
    let mut harness = BspHarness::new(config.count_broadcast);
    let gamma = state.compute_gamma();
    let q = (sample_size as f64 / n as f64).min(1.0);
    let (lists, sampled_ranks) = sample_round(input, &gamma, q, 1, config.seed);
    let combined = harness.gather_samples(&lists, input);
    let histogram = harness.reduce_histogram(&combined, input);
    let summary = state.update_bounds(&histogram);
    harness.broadcast_state((summary.changed_bounds + summary.newly_achieved) as u64);
    let record = harness.close_superstep();
    let per_splitter: Vec<bool> = (1..p).map(|j| state.achievement(j).is_some()).collect();
    let achieved = per_splitter.iter().filter(|&&a| a).count();
    let success = achieved == p - 1;
    let ledger = harness.into_ledger();
    let sample_volume = ledger.total_sample_volume;
    let partition = success.then(|| {
        let np = state.ideal_bucket();
        let round = RoundReport {
            round: 1,
            unachieved_at_start: p - 1,
            gamma_len: n,
            q,
            samples: record.samples_gathered,
            histogram: record.histogram_entries,
            broadcast: record.broadcast_entries,
            h: record.h,
            newly_achieved: summary.newly_achieved,
            sampleable_bound_ok: n as f64
                <= (2.0 + config.epsilon) * ((p as u64 - 1) * np) as f64,
        };
        let trace = RunTrace {
            sampled_ranks: vec![sampled_ranks],
            gamma: vec![gamma],
        };
        let counts = InvariantCounts { pass: 1, fail: 0 };
        assemble(&state, ledger.clone(), vec![round], trace, counts, false)
    });
    Ok(SampleSortOutcome {
        success,
        per_splitter,
        achieved_splitters: achieved,
        sample_volume,
        ledger,
        partition,
    })
}

fn assemble(
    state: &SplitterState,
    ledger: CostLedger,
    per_round: Vec<RoundReport>,
    trace: RunTrace,
    counts: InvariantCounts,
    fallback_used: bool,
) -> PartitionResult {
    let splitters = state.splitters().expect("assemble requires all splitters achieved");
    let splitter_keys: Vec<u64> = splitters.iter().map(|&(k, _)| k).collect();
    let splitter_ranks: Vec<u64> = splitters.iter().map(|&(_, r)| r).collect();
    let n = state.n();
    let np = state.ideal_bucket();
    let bucket_sizes = bucket_sizes_from_ranks(&splitter_ranks, n);
    let max_bucket = bucket_sizes.iter().copied().max().unwrap_or(0);
    let rounds = ledger.rounds;
    let total_sample_volume = ledger.total_sample_volume;
    let kappa = ledger.max_h() as f64 / state.p() as f64;
    PartitionResult {
        splitter_keys,
        splitter_ranks,
        bucket_sizes,
        balance_factor: max_bucket as f64 / np as f64,
        rounds,
        total_sample_volume,
        kappa,
        fallback_used,
        sampleable_bound: counts,
        ledger,
        per_round,
        trace,
    }
}

/// Bucket sizes induced by sorted splitter ranks, with the implicit
/// sentinels rank 0 and rank `n`.
pub fn bucket_sizes_from_ranks(splitter_ranks: &[u64], n: u64) -> Vec<u64> {
    let mut sizes = Vec::with_capacity(splitter_ranks.len() + 1);
    let mut prev = 0u64;
    for &r in splitter_ranks {
        sizes.push(r - prev);
        prev = r;
    }
    sizes.push(n - prev);
    sizes
}

/// Check that sorted splitter ranks cut `n` keys into `p` buckets of at most
/// `(1+epsilon) * n/p` keys, and report the largest bucket.
pub fn verify_balance(splitter_ranks: &[u64], n: u64, p: usize, epsilon: f64) -> (bool, u64) {
    assert_eq!(splitter_ranks.len(), p - 1, "need exactly p-1 splitters");
    assert!(splitter_ranks.windows(2).all(|w| w[0] <= w[1]), "splitter ranks sorted");
    let sizes = bucket_sizes_from_ranks(splitter_ranks, n);
    let max_bucket = sizes.iter().copied().max().unwrap_or(0);
    let limit = (1.0 + epsilon) * (n / p as u64) as f64;
    (max_bucket as f64 <= limit, max_bucket)
}
