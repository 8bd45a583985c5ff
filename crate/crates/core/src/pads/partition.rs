use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::kernel::EntityId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PartitionStrategy {
    RoundRobin,
    Block,
    Geographic,
}

impl FromStr for PartitionStrategy {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "round-robin" => Ok(PartitionStrategy::RoundRobin),
            "block" => Ok(PartitionStrategy::Block),
            "geographic" => Ok(PartitionStrategy::Geographic),
            other => Err(SimError::Config(format!(
                "unknown partition strategy {other:?}; expected round-robin, block or geographic"
            ))),
        }
    }
}

impl fmt::Display for PartitionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PartitionStrategy::RoundRobin => "round-robin",
            PartitionStrategy::Block => "block",
            PartitionStrategy::Geographic => "geographic",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub assignment: BTreeMap<EntityId, usize>,
    pub strategy: PartitionStrategy,
    pub n_lps: usize,
}

impl Partition {
    pub fn lp_of(&self, id: EntityId) -> Option<usize> {
        self.assignment.get(&id).copied()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_lps];
        for &lp in self.assignment.values() {
            sizes[lp] += 1;
        }
        sizes
    }
}

fn check_lps(n_lps: usize) -> Result<()> {
    if n_lps == 0 {
        return Err(SimError::Config("n_lps must be at least 1".into()));
    }
    Ok(())
}

/// Contiguous ranges whose sizes differ by at most one, larger ones first.
fn block_owner(index: usize, n: usize, n_lps: usize) -> usize {
    let base = n / n_lps;
    let extra = n % n_lps;
    let big = extra * (base + 1);
    if index < big {
        index / (base + 1)
    } else {
        extra + (index - big) / base.max(1)
    }
}

/// Splits `entities` (taken in ascending id order) over `n_lps`.
///
/// `Geographic` without coordinates degrades to `Block`; use
/// [`geographic_partition`] when positions are known.
pub fn make_partition(entities: &[EntityId], n_lps: usize, strategy: PartitionStrategy) -> Result<Partition> {
    check_lps(n_lps)?;
    let mut ids = entities.to_vec();
    ids.sort_unstable();
    let n = ids.len();
    let assignment = ids
        .iter()
        .enumerate()
        .map(|(i, &id)| {
            let lp = match strategy {
                PartitionStrategy::RoundRobin => i % n_lps,
                PartitionStrategy::Block | PartitionStrategy::Geographic => block_owner(i, n, n_lps),
            };
            (id, lp)
        })
        .collect();
    Ok(Partition {
        assignment,
        strategy,
        n_lps,
    })
}

/// Vertical strips: entities sorted by x (then y, then id) and cut into
/// equal blocks, so neighbors in space tend to share an LP.
pub fn geographic_partition(entities: &[(EntityId, (f64, f64))], n_lps: usize) -> Result<Partition> {
    check_lps(n_lps)?;
    let mut sorted = entities.to_vec();
    sorted.sort_by(|a, b| a.1 .0.total_cmp(&b.1 .0).then(a.1 .1.total_cmp(&b.1 .1)).then(a.0.cmp(&b.0)));
    let n = sorted.len();
    let assignment = sorted.iter().enumerate().map(|(i, (id, _))| (*id, block_owner(i, n, n_lps))).collect();
    Ok(Partition {
        assignment,
        strategy: PartitionStrategy::Geographic,
        n_lps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: u64) -> Vec<EntityId> {
        (0..n).map(EntityId).collect()
    }

    #[test]
    fn round_robin_alternates() {
        let p = make_partition(&ids(10), 2, PartitionStrategy::RoundRobin).unwrap();
        for (id, lp) in &p.assignment {
            assert_eq!(*lp as u64, id.0 % 2);
        }
    }

    #[test]
    fn block_sizes_differ_by_one() {
        let p = make_partition(&ids(10), 3, PartitionStrategy::Block).unwrap();
        assert_eq!(p.sizes(), vec![4, 3, 3]);
        assert_eq!(p.lp_of(EntityId(3)), Some(0));
        assert_eq!(p.lp_of(EntityId(4)), Some(1));
        let tiny = make_partition(&ids(2), 4, PartitionStrategy::Block).unwrap();
        assert_eq!(tiny.sizes(), vec![1, 1, 0, 0]);
    }

    #[test]
    fn one_lp_takes_everything() {
        for s in [PartitionStrategy::RoundRobin, PartitionStrategy::Block, PartitionStrategy::Geographic] {
            let p = make_partition(&ids(7), 1, s).unwrap();
            assert!(p.assignment.values().all(|&lp| lp == 0));
        }
    }

    #[test]
    fn zero_lps_is_a_config_error() {
        assert!(matches!(
            make_partition(&ids(3), 0, PartitionStrategy::Block),
            Err(SimError::Config(_))
        ));
    }

    #[test]
    fn geographic_groups_by_x() {
        let es: Vec<_> = (0..4).map(|i| (EntityId(i), (if i % 2 == 0 { 0.0 } else { 100.0 }, 0.0))).collect();
        let p = geographic_partition(&es, 2).unwrap();
        assert_eq!(p.lp_of(EntityId(0)), p.lp_of(EntityId(2)));
        assert_eq!(p.lp_of(EntityId(1)), p.lp_of(EntityId(3)));
        assert_ne!(p.lp_of(EntityId(0)), p.lp_of(EntityId(1)));
    }
}
