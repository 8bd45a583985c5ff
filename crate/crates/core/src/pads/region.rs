use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::directory::Directory;
use crate::kernel::{RegionId, Topics};

/// Which LPs receive each region's publications, and since when.
///
/// A subscription added at step `s` sees publishes from step `s` on;
/// earlier ones are never replayed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionRegistry {
    subs: BTreeMap<RegionId, BTreeMap<usize, u64>>,
}

impl RegionRegistry {
    pub fn new() -> Self {
        RegionRegistry::default()
    }

    pub fn subscribe(&mut self, lp: usize, region: RegionId, step: u64) {
        self.subs.entry(region).or_default().entry(lp).or_insert(step);
    }

    pub fn unsubscribe(&mut self, lp: usize, region: RegionId) {
        if let Some(s) = self.subs.get_mut(&region) {
            s.remove(&lp);
        }
    }

    /// LPs that get a publish made at `step`, ascending.
    pub fn recipients(&self, region: RegionId, step: u64) -> Vec<usize> {
        self.subs
            .get(&region)
            .map(|s| s.iter().filter(|(_, &since)| since <= step).map(|(&lp, _)| lp).collect())
            .unwrap_or_default()
    }

    /// Subscribes exactly the LPs hosting at least one member of each region.
    pub fn sync(&mut self, topics: &Topics, directory: &Directory, step: u64) {
        for (region, members) in topics.regions() {
            let hosts: BTreeSet<usize> = members
                .iter()
                .filter_map(|m| directory.owner(directory.resolve(*m)))
                .collect();
            let current: Vec<usize> = self.subs.get(region).map(|s| s.keys().copied().collect()).unwrap_or_default();
            for lp in current {
                if !hosts.contains(&lp) {
                    self.unsubscribe(lp, *region);
                }
            }
            for lp in hosts {
                self.subscribe(lp, *region, step);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn late_subscriber_misses_earlier_publishes() {
        let mut r = RegionRegistry::new();
        let region = RegionId(1);
        r.subscribe(0, region, 0);
        r.subscribe(2, region, 5);
        assert_eq!(r.recipients(region, 4), vec![0]);
        assert_eq!(r.recipients(region, 5), vec![0, 2]);
        r.unsubscribe(0, region);
        assert_eq!(r.recipients(region, 9), vec![2]);
        assert!(r.recipients(RegionId(7), 9).is_empty());
    }
}
