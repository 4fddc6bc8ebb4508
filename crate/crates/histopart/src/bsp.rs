//! Bulk-synchronous superstep accounting.
//!
//! A round of the splitter-selection algorithms is one superstep: every
//! processor sends its sampled keys to the coordinator (processor 0), local
//! ranks are reduced into a histogram there, and the updated state is
//! broadcast back. Nothing is actually distributed — the harness simulates
//! the communication and records its volume, in key/entry units, in a
//! [`CostLedger`].
//!
//! `h` is the classic per-superstep communication bound: the maximum
//! send+receive volume over processors. The coordinator dominates every
//! superstep of these algorithms, so `h` is the coordinator's total traffic.

use crate::keyspace::GlobalInput;
use serde::Serialize;

/// Communication volume of one superstep, in keys/entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SuperstepRecord {
    /// 1-based superstep index.
    pub index: usize,
    /// Keys gathered to the coordinator.
    #[serde(rename = "samples")]
    pub samples_gathered: u64,
    /// Histogram entries reduced at the coordinator.
    #[serde(rename = "histogram")]
    pub histogram_entries: u64,
    /// Entries broadcast back to all processors (0 if broadcast accounting
    /// is disabled).
    #[serde(rename = "broadcast")]
    pub broadcast_entries: u64,
    /// Max per-processor send+receive volume: the coordinator's traffic.
    pub h: u64,
}

/// Full communication record of a run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CostLedger {
    pub rounds: usize,
    pub total_sample_volume: u64,
    pub supersteps: Vec<SuperstepRecord>,
}

impl CostLedger {
    /// Largest per-superstep traffic, for the `h <= kappa * p` bookkeeping.
    pub fn max_h(&self) -> u64 {
        self.supersteps.iter().map(|s| s.h).max().unwrap_or(0)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("ledger serializes")
    }
}

/// Simulated BSP machine: accumulates per-superstep counters and closes them
/// into [`SuperstepRecord`]s.
#[derive(Debug)]
pub struct BspHarness {
    ledger: CostLedger,
    samples: u64,
    histogram: u64,
    broadcast: u64,
    count_broadcast: bool,
}

impl BspHarness {
    /// `count_broadcast` controls whether broadcast payloads contribute to
    /// the ledger (they are part of the coordinator's traffic, but some cost
    /// models ignore the downstream direction).
    pub fn new(count_broadcast: bool) -> Self {
        BspHarness {
            ledger: CostLedger::default(),
            samples: 0,
            histogram: 0,
            broadcast: 0,
            count_broadcast,
        }
    }

    /// All-to-one gather of per-processor sample lists. Returns the combined
    /// sample, sorted. Panics if a list contains a key that is not local to
    /// its processor or if the same key arrives twice — both would mean the
    /// simulation itself is broken.
    pub fn gather_samples(&mut self, per_proc: &[Vec<u64>], input: &GlobalInput) -> Vec<u64> {
        assert_eq!(per_proc.len(), input.p(), "one sample list per processor");
        let mut combined = Vec::new();
        for (proc, list) in per_proc.iter().enumerate() {
            let local = input.local_keys(proc).expect("validated processor index");
            for &key in list {
                assert!(
                    local.binary_search(&key).is_ok(),
                    "processor {proc} sampled key {key} it does not hold"
                );
            }
            combined.extend_from_slice(list);
        }
        combined.sort_unstable();
        assert!(
            combined.windows(2).all(|w| w[0] != w[1]),
            "duplicate key gathered from two processors"
        );
        self.samples += combined.len() as u64;
        self.ledger.total_sample_volume += combined.len() as u64;
        combined
    }

    /// Rank reduction: for every sampled key, sum the per-processor local
    /// ranks. Because the keys are globally distinct, that sum is the key's
    /// global rank. Input sample must be sorted (as `gather_samples` leaves
    /// it), and the result is `(key, rank)` in the same order.
    pub fn reduce_histogram(
        &mut self,
        sample: &[u64],
        input: &GlobalInput,
    ) -> Vec<(u64, u64)> {
        debug_assert!(sample.windows(2).all(|w| w[0] < w[1]), "sample sorted+distinct");
        let mut ranks = vec![0u64; sample.len()];
        for proc in 0..input.p() {
            let local = input.local_keys(proc).expect("validated processor index");
            let mut i = 0usize;
            for (j, &key) in sample.iter().enumerate() {
                while i < local.len() && local[i] <= key {
                    i += 1;
                }
                ranks[j] += i as u64;
            }
        }
        self.histogram += sample.len() as u64;
        sample.iter().copied().zip(ranks).collect()
    }

    /// One-to-all broadcast of `entries` state entries.
    pub fn broadcast_state(&mut self, entries: u64) {
        if self.count_broadcast {
            self.broadcast += entries;
        }
    }

    /// Seal the current superstep into the ledger and reset the counters.
    pub fn close_superstep(&mut self) -> SuperstepRecord {
        let record = SuperstepRecord {
            index: self.ledger.supersteps.len() + 1,
            samples_gathered: self.samples,
            histogram_entries: self.histogram,
            broadcast_entries: self.broadcast,
            h: self.samples + self.histogram + self.broadcast,
        };
        self.samples = 0;
        self.histogram = 0;
        self.broadcast = 0;
        self.ledger.supersteps.push(record);
        self.ledger.rounds = self.ledger.supersteps.len();
        record
    }

    pub fn ledger(&self) -> &CostLedger {
        &self.ledger
    }

    pub fn into_ledger(self) -> CostLedger {
        self.ledger
    }
}
