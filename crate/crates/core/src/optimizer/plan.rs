use serde::{Deserialize, Serialize};

/// Transfer counts for one idle segment: `(from, to, cycles)` with non-zero cycles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodTransfers {
    /// Index of the idle segment inside the planned mission window.
    pub segment: usize,
    pub counts: Vec<(usize, usize, u64)>,
}

impl PeriodTransfers {
    pub fn cycles(&self) -> u64 {
        self.counts.iter().map(|c| c.2).sum()
    }
}

/// Number of single transfer cycles from cell `i` to cell `j` in each idle
/// period. Periods without transfers are omitted, so the all-zero plan has
/// no periods at all.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferPlan {
    pub periods: Vec<PeriodTransfers>,
}

impl TransferPlan {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Builds a plan from `(segment, from, to, cycles)` entries, dropping
    /// zeros and merging duplicates.
    pub fn from_entries(entries: impl IntoIterator<Item = (usize, usize, usize, u64)>) -> Self {
        let mut all: Vec<_> = entries.into_iter().filter(|e| e.3 > 0).collect();
        all.sort_unstable();
        let mut plan = Self::zero();
        for (segment, i, j, c) in all {
            if plan.periods.last().map(|p| p.segment) != Some(segment) {
                plan.periods.push(PeriodTransfers {
                    segment,
                    counts: Vec::new(),
                });
            }
            let counts = &mut plan.periods.last_mut().expect("pushed above").counts;
            match counts.last_mut() {
                Some(last) if (last.0, last.1) == (i, j) => last.2 += c,
                _ => counts.push((i, j, c)),
            }
        }
        plan
    }

    pub fn is_zero(&self) -> bool {
        self.periods.is_empty()
    }

    pub fn count(&self, i: usize, j: usize, segment: usize) -> u64 {
        self.period(segment)
            .and_then(|p| p.counts.iter().find(|c| c.0 == i && c.1 == j))
            .map_or(0, |c| c.2)
    }

    pub fn period(&self, segment: usize) -> Option<&PeriodTransfers> {
        self.periods.iter().find(|p| p.segment == segment)
    }

    pub fn total_cycles(&self) -> u64 {
        self.periods.iter().map(PeriodTransfers::cycles).sum()
    }

    /// Idle periods with at least one transfer cycle.
    pub fn active_periods(&self) -> usize {
        self.periods.len()
    }

    /// Same transfers with segment indices shifted by `offset`.
    pub fn shifted(mut self, offset: usize) -> Self {
        for p in &mut self.periods {
            p.segment += offset;
        }
        self
    }
}
