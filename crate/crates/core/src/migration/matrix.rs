use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::kernel::EntityId;

type Counts = BTreeMap<EntityId, BTreeMap<usize, u64>>;

/// Sliding window of per-entity message counts by destination LP.
///
/// Holds the last `window` steps that had any traffic; counts older than
/// `s - window + 1` fall out when step `s` is recorded or queried.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionMatrix {
    window: u64,
    steps: VecDeque<(u64, Counts)>,
}

impl InteractionMatrix {
    pub fn new(window: u64) -> Self {
        InteractionMatrix {
            window: window.max(1),
            steps: VecDeque::new(),
        }
    }

    pub fn window(&self) -> u64 {
        self.window
    }

    pub fn record_interaction(&mut self, src: EntityId, dst_lp: usize, step: u64) {
        self.record_count(src, dst_lp, step, 1);
    }

    pub fn record_count(&mut self, src: EntityId, dst_lp: usize, step: u64, count: u64) {
        if count == 0 {
            return;
        }
        self.evict(step);
        if self.steps.back().is_some_and(|(s, _)| *s > step) {
            // out-of-order record: find or insert its bucket
            let pos = self.steps.iter().position(|(s, _)| *s >= step).unwrap_or(self.steps.len());
            if self.steps.get(pos).map(|(s, _)| *s) != Some(step) {
                self.steps.insert(pos, (step, Counts::new()));
            }
            *self.steps[pos].1.entry(src).or_default().entry(dst_lp).or_default() += count;
            return;
        }
        if self.steps.back().map(|(s, _)| *s) != Some(step) {
            self.steps.push_back((step, Counts::new()));
        }
        let bucket = &mut self.steps.back_mut().expect("bucket exists").1;
        *bucket.entry(src).or_default().entry(dst_lp).or_default() += count;
    }

    /// Drops buckets outside `[now - window + 1, now]`.
    pub fn evict(&mut self, now: u64) {
        while self.steps.front().is_some_and(|(s, _)| s + self.window <= now) {
            self.steps.pop_front();
        }
    }

    fn live(&self, now: u64) -> impl Iterator<Item = &Counts> {
        self.steps
            .iter()
            .filter(move |(s, _)| *s <= now && s + self.window > now)
            .map(|(_, c)| c)
    }

    /// Messages `src` sent to `lp` within the window ending at `now`.
    pub fn count(&self, src: EntityId, lp: usize, now: u64) -> u64 {
        self.live(now).filter_map(|c| c.get(&src)).filter_map(|m| m.get(&lp)).sum()
    }

    pub fn total(&self, src: EntityId, now: u64) -> u64 {
        self.live(now).filter_map(|c| c.get(&src)).flat_map(|m| m.values()).sum()
    }

    /// Window totals for every entity that sent anything.
    pub fn per_entity(&self, now: u64) -> BTreeMap<EntityId, BTreeMap<usize, u64>> {
        let mut out: Counts = BTreeMap::new();
        for c in self.live(now) {
            for (src, m) in c {
                let e = out.entry(*src).or_default();
                for (lp, n) in m {
                    *e.entry(*lp).or_default() += n;
                }
            }
        }
        out
    }
}
