use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// End-of-step marker: `from` finished step `step` and flushed everything
/// it sent during it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EosMessage {
    pub from: usize,
    pub step: u64,
}

/// Distributed barrier bookkeeping for one LP.
///
/// EOS markers for later steps may arrive early (a fast peer already
/// finished the next step); they are kept until that barrier is awaited.
#[derive(Debug, Clone)]
pub struct EosTracker {
    me: usize,
    n_lps: usize,
    seen: BTreeMap<u64, BTreeSet<usize>>,
    released: Option<u64>,
    max_spread: u64,
}

impl EosTracker {
    pub fn new(me: usize, n_lps: usize) -> Self {
        EosTracker {
            me,
            n_lps,
            seen: BTreeMap::new(),
            released: None,
            max_spread: 0,
        }
    }

    /// Records a marker received while this LP is at step `current`.
    pub fn record(&mut self, eos: EosMessage, current: u64) -> Result<()> {
        if eos.from == self.me || eos.from >= self.n_lps {
            return Err(SimError::Protocol(format!("LP {} got EOS from invalid sender {}", self.me, eos.from)));
        }
        if self.released.is_some_and(|r| eos.step <= r) {
            return Err(SimError::Protocol(format!(
                "LP {} got EOS({}) from LP {} after that barrier closed",
                self.me, eos.step, eos.from
            )));
        }
        if !self.seen.entry(eos.step).or_default().insert(eos.from) {
            return Err(SimError::Protocol(format!(
                "duplicate EOS({}) from LP {} at LP {}",
                eos.step, eos.from, self.me
            )));
        }
        self.max_spread = self.max_spread.max(eos.step.abs_diff(current));
        Ok(())
    }

    pub fn is_complete(&self, step: u64) -> bool {
        let have = self.seen.get(&step).map_or(0, BTreeSet::len);
        have + 1 >= self.n_lps
    }

    /// Closes the barrier for `step`.
    pub fn release(&mut self, step: u64) {
        self.seen.remove(&step);
        self.released = Some(step);
    }

    /// Markers held for steps after `step`.
    pub fn buffered_after(&self, step: u64) -> usize {
        self.seen.range(step + 1..).map(|(_, s)| s.len()).sum()
    }

    pub fn max_spread(&self) -> u64 {
        self.max_spread
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn completes_after_all_peers() {
        let mut t = EosTracker::new(0, 3);
        assert!(!t.is_complete(0));
        t.record(EosMessage { from: 1, step: 0 }, 0).unwrap();
        assert!(!t.is_complete(0));
        t.record(EosMessage { from: 2, step: 0 }, 0).unwrap();
        assert!(t.is_complete(0));
    }

    #[test]
    fn early_marker_is_buffered() {
        let mut t = EosTracker::new(0, 3);
        t.record(EosMessage { from: 1, step: 0 }, 0).unwrap();
        // LP1 races ahead and finishes step 1 while LP2 is still on step 0
        t.record(EosMessage { from: 1, step: 1 }, 0).unwrap();
        assert!(!t.is_complete(0));
        assert_eq!(t.buffered_after(0), 1);
        t.record(EosMessage { from: 2, step: 0 }, 0).unwrap();
        assert!(t.is_complete(0));
        t.release(0);
        assert!(!t.is_complete(1));
        t.record(EosMessage { from: 2, step: 1 }, 1).unwrap();
        assert!(t.is_complete(1));
        assert_eq!(t.max_spread(), 1);
    }

    #[test]
    fn duplicates_and_stale_markers_fail() {
        let mut t = EosTracker::new(0, 2);
        t.record(EosMessage { from: 1, step: 4 }, 4).unwrap();
        assert!(matches!(t.record(EosMessage { from: 1, step: 4 }, 4), Err(SimError::Protocol(_))));
        t.release(4);
        assert!(t.record(EosMessage { from: 1, step: 3 }, 5).is_err());
        assert!(t.record(EosMessage { from: 0, step: 5 }, 5).is_err());
    }

    #[test]
    fn single_lp_never_waits() {
        assert!(EosTracker::new(0, 1).is_complete(10));
    }
}
