use serde::{Deserialize, Serialize};

use super::entity::EntityId;
use super::trace::Trace;
use crate::multilevel::{FineSample, SessionId, TriggerMode};

/// Aggregates for one coarse step.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: u64,
    /// Resident entity count per LP.
    pub lp_loads: Vec<usize>,
    pub local_msgs: u64,
    pub remote_msgs: u64,
    pub bytes_remote: u64,
    pub active_sessions: usize,
    pub population: u64,
    pub quantity: f64,
    /// Slowest LP's wall-clock time for the step.
    pub wall_ms: f64,
}

impl StepMetrics {
    /// Fraction of routed messages that crossed an LP boundary.
    pub fn remote_ratio(&self) -> f64 {
        let total = self.local_msgs + self.remote_msgs;
        if total == 0 {
            0.0
        } else {
            self.remote_msgs as f64 / total as f64
        }
    }
}

/// Outcome of one finished refinement session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub id: SessionId,
    pub region: Vec<EntityId>,
    pub s0: u64,
    pub s1: u64,
    pub trigger: TriggerMode,
    pub vehicles_in: u64,
    pub vehicles_out: u64,
    pub fine_steps: u64,
    pub detail: Vec<FineSample>,
}

/// One executed migration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MigrationRecord {
    /// Boundary step at which the entity started executing on `to_lp`.
    pub step: u64,
    pub entity: EntityId,
    pub from_lp: usize,
    pub to_lp: usize,
    /// `None` for moves that consolidate a region before refinement.
    pub external_ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunCounters {
    pub sent: u64,
    pub delivered: u64,
    pub dropped_at_horizon: u64,
    /// Messages observed for an already completed step. Must stay 0.
    pub causality_violations: u64,
    /// Largest `|peer step - own step|` seen on any EOS message.
    pub max_eos_spread: u64,
    pub off_boundary_deliveries: u64,
    pub publications: u64,
    /// Subscriber-LP deliveries of publications (one per subscriber per publish).
    pub publication_deliveries: u64,
}

/// Everything a run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub trace: Trace,
    pub metrics: Vec<StepMetrics>,
    pub sessions: Vec<SessionRecord>,
    pub migrations: Vec<MigrationRecord>,
    pub counters: RunCounters,
}

/// Shared counter of completed steps, readable while a run is in flight.
#[derive(Debug, Clone, Default)]
pub struct Progress(std::sync::Arc<std::sync::atomic::AtomicU64>);

impl Progress {
    pub fn completed(&self) -> u64 {
        self.0.load(std::sync::atomic::Ordering::Relaxed)
    }

    pub fn set(&self, steps: u64) {
        self.0.store(steps, std::sync::atomic::Ordering::Relaxed);
    }
}
