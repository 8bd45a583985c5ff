use std::fmt;

use serde::{Deserialize, Serialize};

use super::time::{LevelId, VirtualTime};

/// Identity of a simulated entity, unique across the run and across levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct EntityId(pub u64);

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

impl From<u64> for EntityId {
    fn from(v: u64) -> Self {
        EntityId(v)
    }
}

/// Publish/subscribe topic identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RegionId(pub u32);

/// A timestamped interaction between two entities.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventMessage {
    pub src: EntityId,
    pub dst: EntityId,
    pub send_step: VirtualTime,
    pub deliver_step: VirtualTime,
    /// Per-sender monotone counter; `(src, seq)` is unique within a run.
    pub seq: u64,
    pub payload: Vec<u8>,
}

impl EventMessage {
    /// Canonical inbox order.
    pub fn order_key(&self) -> (EntityId, u64) {
        (self.src, self.seq)
    }
}

/// The unit of modeling, migration and refinement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedEntity<S> {
    pub id: EntityId,
    pub kind: u32,
    pub level: LevelId,
    pub state: S,
}

impl<S> SimulatedEntity<S> {
    pub fn new(id: EntityId, kind: u32, state: S) -> Self {
        SimulatedEntity {
            id,
            kind,
            level: LevelId::COARSE,
            state,
        }
    }

    pub fn at_level(mut self, level: LevelId) -> Self {
        self.level = level;
        self
    }
}
