use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::partition::Partition;
use crate::error::{Result, SimError};
use crate::kernel::{EntityId, EventMessage};

/// Entity → owning LP, replicated on every LP and changed only at step
/// boundaries. Frozen entities alias to the session entity standing in
/// for them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Directory {
    owner: BTreeMap<EntityId, usize>,
    aliases: BTreeMap<EntityId, EntityId>,
    version: u64,
    n_lps: usize,
}

/// Entity move applied to the directory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Move {
    pub entity: EntityId,
    pub from: usize,
    pub to: usize,
}

impl Directory {
    pub fn new(partition: &Partition) -> Self {
        Directory {
            owner: partition.assignment.clone(),
            aliases: BTreeMap::new(),
            version: 0,
            n_lps: partition.n_lps,
        }
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn n_lps(&self) -> usize {
        self.n_lps
    }

    pub fn owner(&self, id: EntityId) -> Option<usize> {
        self.owner.get(&id).copied()
    }

    /// Entity that actually receives messages addressed to `id`.
    pub fn resolve(&self, id: EntityId) -> EntityId {
        self.aliases.get(&id).copied().unwrap_or(id)
    }

    pub fn residents(&self, lp: usize) -> Vec<EntityId> {
        self.owner.iter().filter(|(_, &l)| l == lp).map(|(&id, _)| id).collect()
    }

    pub fn loads(&self) -> Vec<usize> {
        let mut loads = vec![0; self.n_lps];
        for &lp in self.owner.values() {
            loads[lp] += 1;
        }
        loads
    }

    pub fn len(&self) -> usize {
        self.owner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.owner.is_empty()
    }

    /// Applies a migration batch. The version moves only for non-empty batches.
    pub fn apply_moves(&mut self, moves: &[Move]) -> Result<()> {
        if moves.is_empty() {
            return Ok(());
        }
        for m in moves {
            match self.owner.get_mut(&m.entity) {
                Some(lp) if *lp == m.from && m.to < self.n_lps => *lp = m.to,
                Some(lp) => {
                    return Err(SimError::Protocol(format!(
                        "move of {} from LP {} to LP {}, but directory says LP {}",
                        m.entity, m.from, m.to, lp
                    )))
                }
                None => return Err(SimError::Routing(m.entity)),
            }
        }
        self.version += 1;
        Ok(())
    }

    pub fn insert(&mut self, id: EntityId, lp: usize) {
        self.owner.insert(id, lp);
    }

    pub fn remove(&mut self, id: EntityId) {
        self.owner.remove(&id);
    }

    pub fn alias(&mut self, from: EntityId, to: EntityId) {
        self.aliases.insert(from, to);
    }

    pub fn unalias(&mut self, from: EntityId) {
        self.aliases.remove(&from);
    }
}

/// Per-step message accounting on one LP.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommunicationStats {
    pub local_msgs: u64,
    pub remote_msgs: u64,
    pub bytes_remote: u64,
    pub entities_stepped: u64,
}

impl CommunicationStats {
    pub fn total(&self) -> u64 {
        self.local_msgs + self.remote_msgs
    }
}

/// Owner LP of `msg.dst` (after alias resolution); counts the message as
/// local or remote relative to `sender_lp`.
pub fn route_message(directory: &Directory, msg: &EventMessage, sender_lp: usize, stats: &mut CommunicationStats) -> Result<usize> {
    let target = directory.resolve(msg.dst);
    let lp = directory.owner(target).ok_or(SimError::Routing(msg.dst))?;
    if lp == sender_lp {
        stats.local_msgs += 1;
    } else {
        stats.remote_msgs += 1;
    }
    Ok(lp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{LevelId, VirtualTime};
    use crate::pads::partition::{make_partition, PartitionStrategy};

    fn msg(dst: u64) -> EventMessage {
        EventMessage {
            src: EntityId(0),
            dst: EntityId(dst),
            send_step: VirtualTime::new(0, LevelId::COARSE),
            deliver_step: VirtualTime::new(1, LevelId::COARSE),
            seq: 0,
            payload: vec![],
        }
    }

    fn two_lp_directory() -> Directory {
        let ids: Vec<_> = (0..4).map(EntityId).collect();
        Directory::new(&make_partition(&ids, 2, PartitionStrategy::RoundRobin).unwrap())
    }

    #[test]
    fn local_and_remote_accounting() {
        let dir = two_lp_directory();
        let mut stats = CommunicationStats::default();
        assert_eq!(route_message(&dir, &msg(2), 0, &mut stats).unwrap(), 0);
        assert_eq!((stats.local_msgs, stats.remote_msgs), (1, 0));
        assert_eq!(route_message(&dir, &msg(3), 0, &mut stats).unwrap(), 1);
        assert_eq!((stats.local_msgs, stats.remote_msgs), (1, 1));
    }

    #[test]
    fn unknown_destination_is_a_routing_error() {
        let dir = two_lp_directory();
        let err = route_message(&dir, &msg(99), 0, &mut CommunicationStats::default()).unwrap_err();
        assert!(matches!(err, SimError::Routing(EntityId(99))));
    }

    #[test]
    fn migrated_destination_follows_new_version() {
        let mut dir = two_lp_directory();
        dir.apply_moves(&[Move { entity: EntityId(3), from: 1, to: 0 }]).unwrap();
        assert_eq!(dir.version(), 1);
        let mut stats = CommunicationStats::default();
        assert_eq!(route_message(&dir, &msg(3), 0, &mut stats).unwrap(), 0);
        assert_eq!(stats.local_msgs, 1);
        dir.apply_moves(&[]).unwrap();
        assert_eq!(dir.version(), 1);
    }

    #[test]
    fn stale_move_is_rejected() {
        let mut dir = two_lp_directory();
        assert!(dir.apply_moves(&[Move { entity: EntityId(3), from: 0, to: 1 }]).is_err());
    }
}
