use std::fmt;

use serde::{Deserialize, Serialize};

use crate::kernel::EntityId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SessionId(pub u32);

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TriggerMode {
    Manual,
    Automatic,
}

impl TriggerMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TriggerMode::Manual => "manual",
            TriggerMode::Automatic => "automatic",
        }
    }
}

/// First id handed to fine-level entities; level-0 ids live below it.
pub const FINE_ID_BASE: u64 = 1 << 48;
/// Ids reserved per session: the session entity plus its micro entities.
pub const FINE_IDS_PER_SESSION: u64 = 1 << 24;

/// A region simulated at the fine level over coarse steps `[s0, s1)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementSession {
    pub id: SessionId,
    /// Level-0 entities replaced for the duration, sorted ascending.
    pub region: Vec<EntityId>,
    pub s0: u64,
    pub s1: u64,
    /// Fine steps per coarse step.
    pub ratio: u64,
    /// Fresh id of the fine-level entity that runs the region.
    pub entity: EntityId,
    pub trigger: TriggerMode,
}

impl RefinementSession {
    pub fn span(&self) -> u64 {
        self.s1 - self.s0
    }

    pub fn expected_fine_steps(&self) -> u64 {
        self.ratio * self.span()
    }

    /// The k-th fresh id for micro entities of this session.
    pub fn fine_id(&self, k: u64) -> EntityId {
        debug_assert!(k + 1 < FINE_IDS_PER_SESSION);
        EntityId(self.entity.0 + 1 + k)
    }

    pub fn contains(&self, id: EntityId) -> bool {
        self.region.binary_search(&id).is_ok()
    }

    pub fn overlaps_region(&self, other: &[EntityId]) -> bool {
        other.iter().any(|id| self.contains(*id))
    }

    pub fn overlaps_time(&self, s0: u64, s1: u64) -> bool {
        self.s0 < s1 && s0 < self.s1
    }
}

/// One fine step of a session, for per-session detail output.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FineSample {
    pub fine_step: u64,
    pub population: u64,
    pub mean_speed_mps: f64,
    pub emissions_g: f64,
    pub informed: u64,
}

/// Bookkeeping a model reports when a session is folded back.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SessionAudit {
    /// Vehicles present at refinement plus vehicles that entered later.
    pub vehicles_in: u64,
    /// Vehicles that left during the session plus those returned at coarsening.
    pub vehicles_out: u64,
    pub fine_steps: u64,
    pub off_boundary_deliveries: u64,
    pub detail: Vec<FineSample>,
}

/// A candidate region for automatic refinement, typically the links around
/// a high-betweenness intersection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WatchRegion {
    pub region: Vec<EntityId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub enum TriggerPolicy {
    /// Sessions come only from explicit `trigger_refinement` calls.
    #[default]
    Manual,
    Automatic {
        /// Observation (vehicles on a link) at or above which a region refines.
        density_threshold: f64,
        watch: Vec<WatchRegion>,
        /// Session length in coarse steps.
        min_session_len: u64,
    },
}
