//! Communication-driven entity migration between LPs.
//!
//! At each boundary an entity whose recent traffic mostly goes to one remote
//! LP is proposed to move there, subject to a load cap and a cooldown.

mod matrix;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use matrix::InteractionMatrix;

use crate::error::{Result, SimError};
use crate::kernel::{EntityId, MigrationRecord, Slot};
use crate::pads::{Directory, Move};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MigrationParams {
    /// Window length in steps.
    pub window: u64,
    /// Minimum share of an entity's traffic toward the target LP.
    pub theta: f64,
    /// Load slack: no LP may exceed `(1 + beta) * mean`.
    pub beta: f64,
    /// Steps an entity stays put after moving.
    pub cooldown: u64,
    /// Cap on moves per boundary.
    pub max_per_boundary: usize,
}

impl Default for MigrationParams {
    fn default() -> Self {
        MigrationParams {
            window: 10,
            theta: 0.6,
            beta: 0.2,
            cooldown: 20,
            max_per_boundary: 64,
        }
    }
}

impl MigrationParams {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.window == 0 {
            errs.push("migration.window must be at least 1".to_string());
        }
        if !(self.theta > 0.5 && self.theta <= 1.0) {
            errs.push(format!(
                "migration.theta must be in (0.5, 1] so at most one target qualifies; got {}",
                self.theta
            ));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            errs.push(format!("migration.beta must be a non-negative number; got {}", self.beta));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(SimError::Config(errs.join("; ")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannedMove {
    pub entity: EntityId,
    pub from: usize,
    pub to: usize,
    /// Share of traffic toward `to`; `None` for consolidation moves.
    pub external_ratio: Option<f64>,
}

impl PlannedMove {
    pub fn as_move(&self) -> Move {
        Move {
            entity: self.entity,
            from: self.from,
            to: self.to,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MigrationPlan {
    pub boundary: u64,
    pub moves: Vec<PlannedMove>,
}

impl MigrationPlan {
    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }

    pub fn records(&self) -> Vec<MigrationRecord> {
        self.moves
            .iter()
            .map(|m| MigrationRecord {
                step: self.boundary,
                entity: m.entity,
                from_lp: m.from,
                to_lp: m.to,
                external_ratio: m.external_ratio,
            })
            .collect()
    }
}

/// Everything the planner remembers between boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MigrationState {
    pub params: MigrationParams,
    pub matrix: InteractionMatrix,
    /// Boundary of each entity's last move.
    pub last_moved: BTreeMap<EntityId, u64>,
}

impl MigrationState {
    pub fn new(params: MigrationParams) -> Self {
        MigrationState {
            matrix: InteractionMatrix::new(params.window),
            params,
            last_moved: BTreeMap::new(),
        }
    }

    /// Proposes moves for `boundary` from traffic of steps before it.
    pub fn evaluate(&self, directory: &Directory, pinned: &BTreeSet<EntityId>, boundary: u64) -> MigrationPlan {
        evaluate_migrations(&self.matrix, directory, &self.params, boundary, &self.last_moved, pinned)
    }

    pub fn note_moves(&mut self, plan: &MigrationPlan) {
        for m in &plan.moves {
            self.last_moved.insert(m.entity, plan.boundary);
        }
    }
}

/// The migration rule.
///
/// Entity `e` on LP `p` is a candidate for LP `g != p` when, over the window
/// ending at step `boundary - 1`, more than `theta` of its messages went to
/// `g`, it has not moved in the last `cooldown` boundaries, and `g` stays at
/// or under `(1 + beta) * mean` load after taking it. Candidates are taken by
/// descending ratio, then ascending id, at most `max_per_boundary`.
pub fn evaluate_migrations(
    matrix: &InteractionMatrix,
    directory: &Directory,
    params: &MigrationParams,
    boundary: u64,
    last_moved: &BTreeMap<EntityId, u64>,
    pinned: &BTreeSet<EntityId>,
) -> MigrationPlan {
    let mut plan = MigrationPlan {
        boundary,
        moves: Vec::new(),
    };
    let n_lps = directory.n_lps();
    if boundary == 0 || n_lps < 2 || directory.is_empty() {
        return plan;
    }
    let now = boundary - 1;
    let mut candidates = Vec::new();
    for (entity, by_lp) in matrix.per_entity(now) {
        if pinned.contains(&entity) {
            continue;
        }
        if last_moved.get(&entity).is_some_and(|&b| boundary - b < params.cooldown) {
            continue;
        }
        let Some(from) = directory.owner(entity) else { continue };
        let total: u64 = by_lp.values().sum();
        if total == 0 {
            continue;
        }
        for (&to, &n) in &by_lp {
            let ratio = n as f64 / total as f64;
            if to != from && ratio > params.theta {
                candidates.push((ratio, entity, from, to));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut loads = directory.loads();
    let cap = (1.0 + params.beta) * directory.len() as f64 / n_lps as f64;
    for (ratio, entity, from, to) in candidates {
        if plan.moves.len() >= params.max_per_boundary {
            break;
        }
        if (loads[to] + 1) as f64 > cap {
            continue;
        }
        loads[to] += 1;
        loads[from] -= 1;
        plan.moves.push(PlannedMove {
            entity,
            from,
            to,
            external_ratio: Some(ratio),
        });
    }
    plan
}

pub fn encode_slot<S: Serialize>(slot: &Slot<S>) -> Result<Vec<u8>> {
    Ok(bincode::serialize(slot)?)
}

pub fn decode_slot<S: DeserializeOwned>(bytes: &[u8]) -> Result<Slot<S>> {
    Ok(bincode::deserialize(bytes)?)
}

/// Moves slots between per-LP maps through their serialized form and
/// advances the directory. Used directly by tests and single-process tools;
/// the threaded executor ships the same bytes over its channels.
pub fn apply_migrations<S: Serialize + DeserializeOwned>(
    plan: &MigrationPlan,
    lps: &mut [BTreeMap<EntityId, Slot<S>>],
    directory: &mut Directory,
) -> Result<()> {
    let moves: Vec<Move> = plan.moves.iter().map(PlannedMove::as_move).collect();
    directory.apply_moves(&moves)?;
    for m in &plan.moves {
        let slot = lps
            .get_mut(m.from)
            .and_then(|lp| lp.remove(&m.entity))
            .ok_or_else(|| SimError::Protocol(format!("entity {} is not resident on LP {}", m.entity, m.from)))?;
        let bytes = encode_slot(&slot)?;
        let target = lps
            .get_mut(m.to)
            .ok_or_else(|| SimError::Protocol(format!("no LP {}", m.to)))?;
        target.insert(m.entity, decode_slot(&bytes)?);
    }
    Ok(())
}

/// `step,entity,from_lp,to_lp,external_ratio`; consolidation moves leave the
/// ratio empty.
pub fn write_migration_log<W: Write>(records: &[MigrationRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["step", "entity", "from_lp", "to_lp", "external_ratio"])
        .map_err(|e| SimError::Io(e.into()))?;
    for r in records {
        let ratio = r.external_ratio.map(|x| format!("{x:.6}")).unwrap_or_default();
        out.write_record([
            r.step.to_string(),
            r.entity.0.to_string(),
            r.from_lp.to_string(),
            r.to_lp.to_string(),
            ratio,
        ])
        .map_err(|e| SimError::Io(e.into()))?;
    }
    out.flush()?;
    Ok(())
}
