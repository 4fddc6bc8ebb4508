//! Splitter bound tracking and the sampleable rank domain.
//!
//! For every splitter index `j` (1..p), the target is any key whose global
//! rank falls in the window `[j*n/p, j*n/p + floor(eps*n/p)]`. Between
//! rounds the state remembers, per splitter, the tightest histogrammed ranks
//! known to bracket that window: `lower` is the highest known rank strictly
//! below the window, `upper` the lowest known rank strictly above it
//! (sentinels 0 and n+1 mean "nothing known"). Everything still worth
//! sampling for an unachieved splitter is the open rank interval between its
//! brackets; the union of those intervals over the unachieved splitters is
//! the gamma set.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StateError {
    #[error("need at least two processors, got {0}")]
    TooFewProcessors(usize),
    #[error("processor count {p} must divide the key count {n}")]
    UnevenKeys { n: u64, p: usize },
    #[error("epsilon must be positive and finite, got {0}")]
    BadEpsilon(f64),
}

/// Disjoint, sorted, half-open rank intervals `[start, end)` — the ranks the
/// next round may sample.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct GammaSet {
    intervals: Vec<(u64, u64)>,
    total: u64,
}

impl GammaSet {
    pub fn intervals(&self) -> &[(u64, u64)] {
        &self.intervals
    }

    /// Number of ranks in the set.
    pub fn len(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn contains(&self, rank: u64) -> bool {
        self.intervals
            .binary_search_by(|&(start, end)| {
                if rank < start {
                    std::cmp::Ordering::Greater
                } else if rank >= end {
                    std::cmp::Ordering::Less
                } else {
                    std::cmp::Ordering::Equal
                }
            })
            .is_ok()
    }

    /// Set containment, used to verify that the sampling domain only ever
    /// shrinks from one round to the next.
    pub fn is_subset_of(&self, other: &GammaSet) -> bool {
        self.intervals.iter().all(|&(start, end)| {
            other
                .intervals
                .iter()
                .any(|&(os, oe)| os <= start && end <= oe)
        })
    }
}

/// What a bounds update changed, for broadcast accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UpdateSummary {
    /// Splitters that became achieved in this update.
    pub newly_achieved: usize,
    /// Unachieved splitters whose lower or upper bracket moved.
    pub changed_bounds: usize,
}

/// Per-splitter brackets and achievements for one partitioning run.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitterState {
    n: u64,
    p: usize,
    /// Ideal bucket size `n / p`.
    np: u64,
    /// Window width in ranks: `floor(eps * n / p)`.
    width: u64,
    /// `lower[j-1]`: highest histogrammed rank strictly below window `j`.
    lower: Vec<u64>,
    /// `upper[j-1]`: lowest histogrammed rank strictly above window `j`.
    upper: Vec<u64>,
    /// `(key, rank)` that achieved splitter `j`, once one lands in-window.
    achieved: Vec<Option<(u64, u64)>>,
}

impl SplitterState {
    pub fn new(n: u64, p: usize, epsilon: f64) -> Result<Self, StateError> {
        if p < 2 {
            return Err(StateError::TooFewProcessors(p));
        }
        if n == 0 || !n.is_multiple_of(p as u64) {
            return Err(StateError::UnevenKeys { n, p });
        }
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(StateError::BadEpsilon(epsilon));
        }
        let np = n / p as u64;
        let width = (epsilon * np as f64).floor() as u64;
        Ok(SplitterState {
            n,
            p,
            np,
            width,
            lower: vec![0; p - 1],
            upper: vec![n + 1; p - 1],
            achieved: vec![None; p - 1],
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn ideal_bucket(&self) -> u64 {
        self.np
    }

    /// Inclusive rank window `[j*np, j*np + width]` for splitter `j` in
    /// `1..=p-1`.
    pub fn window(&self, j: usize) -> (u64, u64) {
        debug_assert!(j >= 1 && j < self.p);
        let start = j as u64 * self.np;
        (start, start + self.width)
    }

    pub fn unachieved_count(&self) -> usize {
        self.achieved.iter().filter(|a| a.is_none()).count()
    }

    pub fn all_achieved(&self) -> bool {
        self.achieved.iter().all(|a| a.is_some())
    }

    pub fn achievement(&self, j: usize) -> Option<(u64, u64)> {
        self.achieved[j - 1]
    }

    /// Fold a histogram of `(key, rank)` pairs (sorted by rank) into the
    /// brackets. Ranks landing inside an unachieved window mark that
    /// splitter achieved (ties broken toward the smallest rank); every other
    /// rank can only tighten brackets, never loosen them.
    pub fn update_bounds(&mut self, histogram: &[(u64, u64)]) -> UpdateSummary {
        debug_assert!(
            histogram.windows(2).all(|w| w[0].1 < w[1].1),
            "histogram sorted by rank, ranks distinct"
        );
        let mut summary = UpdateSummary::default();
        if histogram.is_empty() {
            return summary;
        }
        for j in 1..self.p {
            if self.achieved[j - 1].is_some() {
                continue;
            }
            let (start, end) = self.window(j);
            let idx = histogram.partition_point(|&(_, r)| r < start);
            if idx < histogram.len() && histogram[idx].1 <= end {
                self.achieved[j - 1] = Some(histogram[idx]);
                summary.newly_achieved += 1;
                continue;
            }
            let mut moved = false;
            if idx > 0 {
                let below = histogram[idx - 1].1;
                debug_assert!(below < start);
                if below > self.lower[j - 1] {
                    self.lower[j - 1] = below;
                    moved = true;
                }
            }
            if idx < histogram.len() {
                let above = histogram[idx].1;
                debug_assert!(above > end);
                if above < self.upper[j - 1] {
                    self.upper[j - 1] = above;
                    moved = true;
                }
            }
            if moved {
                summary.changed_bounds += 1;
            }
        }
        summary
    }

    /// Union of the candidate intervals of the unachieved splitters, merged
    /// into disjoint sorted half-open intervals. Empty once every splitter
    /// is achieved; the full rank range `[1, n+1)` before anything is known.
    pub fn compute_gamma(&self) -> GammaSet {
        let mut intervals: Vec<(u64, u64)> = Vec::new();
        for j in 1..self.p {
            if self.achieved[j - 1].is_some() {
                continue;
            }
            let start = self.lower[j - 1] + 1;
            let end = self.upper[j - 1]; // half-open: excludes the bracket
            debug_assert!(start < end, "bracketed window is never empty");
            debug_assert!(
                intervals.last().is_none_or(|&(s, _)| s <= start),
                "brackets are monotone in the splitter index"
            );
            match intervals.last_mut() {
                Some(last) if start <= last.1 => last.1 = last.1.max(end),
                _ => intervals.push((start, end)),
            }
        }
        let total = intervals.iter().map(|&(s, e)| e - s).sum();
        GammaSet { intervals, total }
    }

    /// Achieved `(key, rank)` pairs for all splitters, sorted by rank.
    /// `None` while any splitter is still open.
    pub fn splitters(&self) -> Option<Vec<(u64, u64)>> {
        if !self.all_achieved() {
            return None;
        }
        let mut out: Vec<(u64, u64)> = self.achieved.iter().map(|a| a.unwrap()).collect();
        // In-window ranks are already nearly sorted; widths above n/p can
        // produce local inversions, so normalise.
        out.sort_unstable_by_key(|&(_, r)| r);
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state_16_4() -> SplitterState {
        SplitterState::new(16, 4, 1.0).unwrap()
    }

    #[test]
    fn construction_validates() {
        assert!(matches!(
            SplitterState::new(16, 1, 1.0),
            Err(StateError::TooFewProcessors(1))
        ));
        assert!(matches!(
            SplitterState::new(15, 4, 1.0),
            Err(StateError::UnevenKeys { .. })
        ));
        assert!(matches!(
            SplitterState::new(16, 4, 0.0),
            Err(StateError::BadEpsilon(_))
        ));
        assert!(matches!(
            SplitterState::new(16, 4, f64::NAN),
            Err(StateError::BadEpsilon(_))
        ));
    }

    #[test]
    fn windows_are_fixed_width() {
        let state = state_16_4();
        assert_eq!(state.window(1), (4, 8));
        assert_eq!(state.window(2), (8, 12));
        assert_eq!(state.window(3), (12, 16));
        let narrow = SplitterState::new(16, 4, 0.5).unwrap();
        assert_eq!(narrow.window(1), (4, 6));
    }

    #[test]
    fn initial_gamma_is_the_full_rank_range() {
        let state = state_16_4();
        let gamma = state.compute_gamma();
        assert_eq!(gamma.intervals(), &[(1, 17)]);
        assert_eq!(gamma.len(), 16);
    }

    #[test]
    fn in_window_rank_achieves_the_splitter() {
        // Window for splitter 1 is [4, 8]; rank 5 lands inside.
        let mut state = state_16_4();
        let summary = state.update_bounds(&[(500, 5)]);
        assert_eq!(summary.newly_achieved, 1);
        assert_eq!(state.achievement(1), Some((500, 5)));
        assert_eq!(state.unachieved_count(), 2);
    }

    #[test]
    fn below_window_rank_tightens_the_lower_bracket() {
        let mut state = state_16_4();
        let summary = state.update_bounds(&[(300, 3)]);
        assert_eq!(summary.newly_achieved, 0);
        assert_eq!(summary.changed_bounds, 3, "all three splitters see rank 3 below them");
        assert_eq!(state.achievement(1), None);
        let gamma = state.compute_gamma();
        assert_eq!(gamma.intervals(), &[(4, 17)]);
    }

    #[test]
    fn empty_histogram_changes_nothing() {
        let mut state = state_16_4();
        let before = state.clone();
        let summary = state.update_bounds(&[]);
        assert_eq!(summary, UpdateSummary::default());
        assert_eq!(state, before);
    }

    #[test]
    fn brackets_only_tighten() {
        let mut state = state_16_4();
        state.update_bounds(&[(300, 3), (900, 9)]);
        // Splitter 1 bracketed by (3, 9); a looser histogram must not widen.
        let g1 = state.compute_gamma();
        state.update_bounds(&[(100, 1), (1600, 16)]);
        let g2 = state.compute_gamma();
        assert_eq!(g1.intervals()[0], (4, 9));
        assert!(g2.is_subset_of(&g1));
    }

    #[test]
    fn gamma_shrinks_to_empty_when_all_achieved() {
        let mut state = state_16_4();
        state.update_bounds(&[(1, 5), (2, 9), (3, 13)]);
        assert!(state.all_achieved());
        let gamma = state.compute_gamma();
        assert!(gamma.is_empty());
        assert_eq!(gamma.intervals(), &[]);
        let splitters = state.splitters().unwrap();
        assert_eq!(splitters, vec![(1, 5), (2, 9), (3, 13)]);
    }

    #[test]
    fn overlapping_candidate_intervals_merge() {
        // One histogram rank below every window: all three candidate
        // intervals share the tail of the range and collapse to one.
        let mut state = state_16_4();
        state.update_bounds(&[(200, 2)]);
        let gamma = state.compute_gamma();
        assert_eq!(gamma.intervals().len(), 1);
        assert_eq!(gamma.intervals(), &[(3, 17)]);
        // Achieve the middle splitter; the remaining intervals stay split
        // around nothing (rank 9 in window [8,12] removes splitter 2 only).
        state.update_bounds(&[(900, 9)]);
        let gamma = state.compute_gamma();
        assert_eq!(state.unachieved_count(), 2);
        // Splitter 1: (2, 9) -> [3, 9); splitter 3: (9, 17) -> [10, 17).
        assert_eq!(gamma.intervals(), &[(3, 9), (10, 17)]);
        assert_eq!(gamma.len(), 13);
        assert!(!gamma.contains(9));
        assert!(gamma.contains(3));
        assert!(gamma.contains(16));
        assert!(!gamma.contains(17));
    }

    #[test]
    fn smallest_in_window_rank_wins() {
        let mut state = state_16_4();
        state.update_bounds(&[(400, 4), (600, 6)]);
        assert_eq!(state.achievement(1), Some((400, 4)));
    }

    #[test]
    fn achieved_rank_is_always_inside_its_window() {
        let mut state = SplitterState::new(64, 8, 1.0).unwrap();
        let hist: Vec<(u64, u64)> = (1..=64).map(|r| (r * 10, r)).collect();
        state.update_bounds(&hist);
        assert!(state.all_achieved());
        for j in 1..8 {
            let (start, end) = state.window(j);
            let (_, rank) = state.achievement(j).unwrap();
            assert!(rank >= start && rank <= end, "splitter {j} rank {rank}");
        }
    }

    #[test]
    fn subset_check_sees_partial_overlap() {
        let mut a = state_16_4();
        a.update_bounds(&[(200, 2)]);
        let wide = a.compute_gamma(); // [3, 17)
        let mut b = state_16_4();
        b.update_bounds(&[(300, 3), (900, 9)]);
        let narrow = b.compute_gamma(); // [4, 9) u [10, 17)
        assert!(narrow.is_subset_of(&wide));
        assert!(!wide.is_subset_of(&narrow));
    }
}
