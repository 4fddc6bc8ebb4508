//! Experiment driver shared by the command-line binary and the test suite.
//!
//! Every command is a pure function of its spec: trial `t` of a sweep runs
//! with seed `base_seed + t`, inputs are regenerated from scratch, and rows
//! come out ordered by `(p, trial)`. Reruns are byte-identical except for
//! the `wall_time` column.

use crate::core_math::{
    rational_to_f64, runs_enumeration_oracle, runs_expectation, runs_monte_carlo, runs_variance,
    RunsModel,
};
use crate::keyspace::{audit_adversarial, AdversarialParams, GlobalInput, SkewMode};
use crate::partitioner::{
    run_histogram_partitioning, run_hss_fixed, run_sample_sort, verify_balance, PartitionError,
    PartitionResult, PartitionerConfig,
};
use crate::sorter::{exchange_and_sort, verify_sorted};
use serde::Serialize;
use std::fmt;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("empty processor list")]
    NoProcessors,
    #[error("trials must be at least 1")]
    NoTrials,
    #[error(transparent)]
    Keyspace(#[from] crate::keyspace::KeyspaceError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Sort(#[from] crate::sorter::SortError),
    #[error(transparent)]
    Math(#[from] crate::core_math::CoreMathError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    Histopart,
    SampleSort,
    HssFixed,
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algo::Histopart => write!(f, "histopart"),
            Algo::SampleSort => write!(f, "sample_sort"),
            Algo::HssFixed => write!(f, "hss_fixed"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Workload {
    Uniform,
    /// `c = None` picks the largest divisor of `p` at most `sqrt(p)`.
    Adversarial { c: Option<usize> },
    SortedBlocks,
    ZipfGaps,
}

/// Everything a batch of trials depends on.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub algo: Algo,
    pub p_list: Vec<usize>,
    pub keys_per_proc: u64,
    pub epsilon: f64,
    pub sample_constant: f64,
    /// Sample size `S` for the single-round benchmark, or the per-round
    /// budget for the fixed-budget variant. Defaults: `ceil(3 * p * ln p)`
    /// and `p` respectively.
    pub sample_size: Option<u64>,
    pub trials: u64,
    pub seed: u64,
    pub workload: Workload,
    pub count_broadcast: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            algo: Algo::Histopart,
            p_list: vec![16],
            keys_per_proc: 256,
            epsilon: 1.0,
            sample_constant: 3.0,
            sample_size: None,
            trials: 1,
            seed: 0,
            workload: Workload::Uniform,
            count_broadcast: true,
        }
    }
}

/// One line of the sweep matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub algorithm: String,
    pub p: usize,
    #[serde(rename = "N")]
    pub n: u64,
    pub seed: u64,
    pub rounds: usize,
    pub total_sample_volume: u64,
    pub balance_factor: f64,
    pub success: bool,
    pub max_h: u64,
    pub wall_time: f64,
}

/// A row plus the deep run report behind it (and, for `sort`, the
/// end-to-end fields).
#[derive(Debug, Clone, Serialize)]
pub struct TrialRecord {
    #[serde(flatten)]
    pub row: ResultRow,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_load: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exchange_volume: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub globally_sorted: Option<bool>,
    pub report: serde_json::Value,
    #[serde(skip)]
    pub partition: Option<PartitionResult>,
}

fn generate_input(spec: &ExperimentSpec, n: u64, p: usize, seed: u64) -> Result<GlobalInput, CliError> {
    let input = match spec.workload {
        Workload::Uniform => GlobalInput::gen_uniform(n, p, seed)?,
        Workload::Adversarial { c } => {
            let params = c.map_or_else(|| AdversarialParams::default_for(p), |c| AdversarialParams { c });
            GlobalInput::gen_adversarial(n, p, params, seed)?
        }
        Workload::SortedBlocks => GlobalInput::gen_skewed(n, p, SkewMode::SortedBlocks, seed)?,
        Workload::ZipfGaps => GlobalInput::gen_skewed(n, p, SkewMode::ZipfGaps, seed)?,
    };
    Ok(input)
}

fn default_sample_size(algo: Algo, p: usize) -> u64 {
    match algo {
        Algo::SampleSort => (3.0 * p as f64 * (p as f64).ln()).ceil() as u64,
        _ => p as u64,
    }
}

/// Run one trial and build its record. Failing to place all splitters is a
/// `success = false` row; configuration and construction problems are hard
/// errors.
fn run_trial(spec: &ExperimentSpec, p: usize, trial: u64) -> Result<TrialRecord, CliError> {
    let n = p as u64 * spec.keys_per_proc;
    let seed = spec.seed + trial;
    let input = generate_input(spec, n, p, seed)?;
    let config = PartitionerConfig {
        epsilon: spec.epsilon,
        sample_constant: spec.sample_constant,
        seed,
        count_broadcast: spec.count_broadcast,
        ..PartitionerConfig::default()
    };
    let algorithm = spec.algo.to_string();
    let started = Instant::now();
    let mut row = ResultRow {
        algorithm: algorithm.clone(),
        p,
        n,
        seed,
        rounds: 0,
        total_sample_volume: 0,
        balance_factor: 0.0,
        success: false,
        max_h: 0,
        wall_time: 0.0,
    };
    let report;
    let mut partition = None;
    match spec.algo {
        Algo::Histopart | Algo::HssFixed => {
            let run = if spec.algo == Algo::Histopart {
                run_histogram_partitioning(&input, &config)
            } else {
                let budget = spec.sample_size.unwrap_or_else(|| default_sample_size(spec.algo, p));
                run_hss_fixed(&input, &config, budget)
            };
            match run {
                Ok(result) => {
                    let (balanced, _) = verify_balance(&result.splitter_ranks, n, p, spec.epsilon);
                    row.rounds = result.rounds;
                    row.total_sample_volume = result.total_sample_volume;
                    row.balance_factor = result.balance_factor;
                    row.success = balanced;
                    row.max_h = result.ledger.max_h();
                    report = result.report(&algorithm, &config);
                    partition = Some(result);
                }
                // Hitting the round cap is a reportable miss, not a crash.
                Err(PartitionError::RoundCapExceeded { cap, unachieved }) => {
                    row.rounds = cap;
                    report = serde_json::json!({
                        "algorithm": algorithm,
                        "error": "round_cap_exceeded",
                        "cap": cap,
                        "unachieved": unachieved,
                    });
                }
                Err(PartitionError::FallbackFailed { unachieved }) => {
                    row.rounds = config.cap_for(p) + 1;
                    report = serde_json::json!({
                        "algorithm": algorithm,
                        "error": "fallback_failed",
                        "unachieved": unachieved,
                    });
                }
                Err(other) => return Err(other.into()),
            }
        }
        Algo::SampleSort => {
            let s = spec.sample_size.unwrap_or_else(|| default_sample_size(spec.algo, p));
            let outcome = run_sample_sort(&input, &config, s)?;
            row.rounds = outcome.ledger.rounds;
            row.total_sample_volume = outcome.sample_volume;
            row.success = outcome.success;
            row.max_h = outcome.ledger.max_h();
            if let Some(result) = &outcome.partition {
                row.balance_factor = result.balance_factor;
                report = result.report(&algorithm, &config);
            } else {
                report = serde_json::json!({
                    "algorithm": algorithm,
                    "sample_size": s,
                    "achieved_splitters": outcome.achieved_splitters,
                    "per_splitter": outcome.per_splitter,
                    "ledger": outcome.ledger,
                });
            }
            partition = outcome.partition;
        }
    }
    row.wall_time = started.elapsed().as_secs_f64();
    Ok(TrialRecord {
        row,
        max_load: None,
        exchange_volume: None,
        globally_sorted: None,
        report,
        partition,
    })
}

fn run_batch(spec: &ExperimentSpec) -> Result<Vec<TrialRecord>, CliError> {
    if spec.p_list.is_empty() {
        return Err(CliError::NoProcessors);
    }
    if spec.trials == 0 {
        return Err(CliError::NoTrials);
    }
    let mut p_list = spec.p_list.clone();
    p_list.sort_unstable();
    p_list.dedup();
    let mut records = Vec::with_capacity(p_list.len() * spec.trials as usize);
    for &p in &p_list {
        for trial in 0..spec.trials {
            records.push(run_trial(spec, p, trial)?);
        }
    }
    Ok(records)
}

/// Splitter selection only: one record per `(p, trial)`.
pub fn cmd_partition(spec: &ExperimentSpec) -> Result<Vec<TrialRecord>, CliError> {
    run_batch(spec)
}

/// Splitter selection followed by the key exchange; records carry the
/// end-to-end fields.
pub fn cmd_sort(spec: &ExperimentSpec) -> Result<Vec<TrialRecord>, CliError> {
    let mut records = run_batch(spec)?;
    for record in &mut records {
        if let Some(result) = &record.partition {
            let n = record.row.n;
            let p = record.row.p;
            let input = generate_input(spec, n, p, record.row.seed)?;
            let outcome = exchange_and_sort(&input, &result.splitter_keys)?;
            let verified = verify_sorted(&outcome, &input);
            record.row.success = record.row.success && outcome.globally_sorted && verified;
            record.max_load = Some(outcome.max_load);
            record.exchange_volume = Some(outcome.exchange_volume);
            record.globally_sorted = Some(outcome.globally_sorted && verified);
        } else {
            record.globally_sorted = Some(false);
        }
    }
    Ok(records)
}

/// The full matrix, one row per `(p, trial)`.
pub fn cmd_sweep(spec: &ExperimentSpec) -> Result<Vec<TrialRecord>, CliError> {
    run_batch(spec)
}

/// Closed forms vs. exact enumeration (when tractable) vs. Monte Carlo.
pub fn cmd_runsstats(
    m1: u64,
    m2: u64,
    k: u64,
    trials: u64,
    seed: u64,
) -> Result<serde_json::Value, CliError> {
    let model = RunsModel::new(m1, m2, k)?;
    let expectation = runs_expectation(&model)?;
    let variance = runs_variance(&model)?;
    let oracle = match runs_enumeration_oracle(&model) {
        Ok((mean, var)) => serde_json::json!({
            "expectation": mean.to_string(),
            "variance": var.to_string(),
            "expectation_f64": rational_to_f64(&mean),
            "variance_f64": rational_to_f64(&var),
        }),
        Err(_) => serde_json::Value::Null,
    };
    let monte_carlo = if trials > 0 {
        let (mean, var) = runs_monte_carlo(&model, trials, seed)?;
        let std_err = (variance / trials as f64).sqrt();
        serde_json::json!({
            "trials": trials,
            "mean": mean,
            "variance": var,
            "std_err": std_err,
            "within_3se": (mean - expectation).abs() <= 3.0 * std_err,
        })
    } else {
        serde_json::Value::Null
    };
    Ok(serde_json::json!({
        "m1": m1,
        "m2": m2,
        "k": k,
        "closed_form": { "expectation": expectation, "variance": variance },
        "enumeration": oracle,
        "monte_carlo": monte_carlo,
    }))
}

/// Regenerate an adversarial input and audit its structure.
pub fn cmd_adversarial_audit(
    n: u64,
    p: usize,
    c: Option<usize>,
    seed: u64,
) -> Result<serde_json::Value, CliError> {
    let params = c.map_or_else(|| AdversarialParams::default_for(p), |c| AdversarialParams { c });
    let input = GlobalInput::gen_adversarial(n, p, params, seed)?;
    let audit = audit_adversarial(&input, params.c)?;
    Ok(serde_json::json!({
        "n": n,
        "p": p,
        "c": params.c,
        "seed": seed,
        "one_subinterval_per_processor_part": audit.one_subinterval_per_processor_part,
        "keys_per_processor_ok": audit.keys_per_processor_ok,
        "reconstruction_ok": audit.reconstruction_ok,
        "pass": audit.pass,
    }))
}

/// Fixed column order matching [`ResultRow`]; reruns differ only in
/// `wall_time`.
pub const CSV_HEADER: &str =
    "algorithm,p,N,seed,rounds,total_sample_volume,balance_factor,success,max_h,wall_time";

pub fn rows_to_csv(records: &[TrialRecord], with_sort_fields: bool) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    if with_sort_fields {
        out.push_str(",max_load,exchange_volume,globally_sorted");
    }
    out.push('\n');
    for record in records {
        let r = &record.row;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{:.6}",
            r.algorithm,
            r.p,
            r.n,
            r.seed,
            r.rounds,
            r.total_sample_volume,
            r.balance_factor,
            r.success,
            r.max_h,
            r.wall_time
        ));
        if with_sort_fields {
            out.push_str(&format!(
                ",{},{},{}",
                record.max_load.map_or(String::new(), |v| v.to_string()),
                record.exchange_volume.map_or(String::new(), |v| v.to_string()),
                record.globally_sorted.map_or(String::new(), |v| v.to_string()),
            ));
        }
        out.push('\n');
    }
    out
}

/// Deep JSON: the full run report of every record.
pub fn records_to_json(records: &[TrialRecord]) -> serde_json::Value {
    serde_json::json!(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> ExperimentSpec {
        ExperimentSpec {
            p_list: vec![8, 4],
            keys_per_proc: 64,
            trials: 3,
            seed: 100,
            ..ExperimentSpec::default()
        }
    }

    #[test]
    fn sweep_orders_rows_by_p_then_trial() {
        let records = cmd_sweep(&small_spec()).unwrap();
        assert_eq!(records.len(), 6);
        let order: Vec<(usize, u64)> = records.iter().map(|r| (r.row.p, r.row.seed)).collect();
        assert_eq!(order, vec![(4, 100), (4, 101), (4, 102), (8, 100), (8, 101), (8, 102)]);
        assert!(records.iter().all(|r| r.row.success));
    }

    #[test]
    fn sweep_is_deterministic_modulo_wall_time() {
        let spec = small_spec();
        let a = rows_to_csv(&cmd_sweep(&spec).unwrap(), false);
        let b = rows_to_csv(&cmd_sweep(&spec).unwrap(), false);
        let strip = |s: &str| -> String {
            s.lines()
                .map(|line| line.rsplit_once(',').map(|(head, _)| head.to_string()).unwrap())
                .collect::<Vec<_>>()
                .join("\n")
        };
        assert_eq!(strip(&a), strip(&b));
    }

    #[test]
    fn csv_header_is_pinned() {
        let records = cmd_sweep(&ExperimentSpec { trials: 1, ..small_spec() }).unwrap();
        let csv = rows_to_csv(&records, false);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "algorithm,p,N,seed,rounds,total_sample_volume,balance_factor,success,max_h,wall_time"
        );
        let first = lines.next().unwrap();
        assert!(first.starts_with("histopart,4,256,100,"), "{first}");
    }

    #[test]
    fn sort_records_carry_end_to_end_fields() {
        let spec = ExperimentSpec { p_list: vec![8], trials: 2, ..small_spec() };
        let records = cmd_sort(&spec).unwrap();
        for record in records {
            assert_eq!(record.globally_sorted, Some(true));
            assert!(record.max_load.unwrap() <= 2 * 64);
            assert!(record.exchange_volume.unwrap() <= 512);
            assert!(record.row.success);
        }
    }

    #[test]
    fn sample_sort_records_failures_as_rows() {
        let spec = ExperimentSpec {
            algo: Algo::SampleSort,
            p_list: vec![64],
            keys_per_proc: 256,
            sample_size: Some(64),
            trials: 4,
            seed: 0,
            ..ExperimentSpec::default()
        };
        let records = cmd_sweep(&spec).unwrap();
        assert_eq!(records.len(), 4);
        // With only p samples in one round, essentially every trial misses.
        assert!(records.iter().all(|r| !r.row.success));
        assert!(records.iter().all(|r| r.row.rounds == 1));
    }

    #[test]
    fn hss_fixed_uses_the_budget() {
        let spec = ExperimentSpec {
            algo: Algo::HssFixed,
            p_list: vec![8],
            keys_per_proc: 128,
            sample_size: Some(1024), // == n: one full round
            trials: 1,
            ..ExperimentSpec::default()
        };
        let records = cmd_sweep(&spec).unwrap();
        assert_eq!(records[0].row.rounds, 1);
        assert_eq!(records[0].row.total_sample_volume, 1024);
        assert!(records[0].row.success);
    }

    #[test]
    fn runsstats_cross_checks_all_three_routes() {
        let report = cmd_runsstats(2, 1, 2, 10_000, 5).unwrap();
        assert_eq!(report["closed_form"]["expectation"], 2.0 / 3.0);
        assert_eq!(report["enumeration"]["expectation"], "2/3");
        assert_eq!(report["enumeration"]["variance"], "2/9");
        assert_eq!(report["monte_carlo"]["within_3se"], true);
        // Large models skip enumeration but keep the rest.
        let big = cmd_runsstats(900, 100, 5, 100, 6).unwrap();
        assert!(big["enumeration"].is_null());
        assert!(big["closed_form"]["expectation"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn adversarial_audit_passes_on_generated_input() {
        let report = cmd_adversarial_audit(4096, 64, Some(8), 3).unwrap();
        assert_eq!(report["pass"], true);
        assert_eq!(report["one_subinterval_per_processor_part"], true);
        // Default part count: largest divisor at most sqrt(p).
        let defaulted = cmd_adversarial_audit(4096, 64, None, 3).unwrap();
        assert_eq!(defaulted["c"], 8);
        assert_eq!(defaulted["pass"], true);
    }

    #[test]
    fn batch_validation() {
        let empty = ExperimentSpec { p_list: vec![], ..ExperimentSpec::default() };
        assert!(matches!(cmd_sweep(&empty), Err(CliError::NoProcessors)));
        let no_trials = ExperimentSpec { trials: 0, ..ExperimentSpec::default() };
        assert!(matches!(cmd_sweep(&no_trials), Err(CliError::NoTrials)));
    }

    #[test]
    fn adversarial_workload_sweeps_clean() {
        let spec = ExperimentSpec {
            p_list: vec![16],
            keys_per_proc: 64,
            workload: Workload::Adversarial { c: Some(4) },
            trials: 3,
            ..ExperimentSpec::default()
        };
        let records = cmd_sweep(&spec).unwrap();
        assert!(records.iter().all(|r| r.row.success));
    }
}
