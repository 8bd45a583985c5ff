use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::entity::{EntityId, EventMessage, RegionId, SimulatedEntity};
use super::rng::RandomStream;
use super::time::{LevelId, VirtualTime};
use crate::error::{Result, SimError};
use crate::multilevel::{RefinementSession, SessionAudit};

/// Model-defined aggregates reported per entity and summed per step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Tally {
    /// Countable population (vehicles in the traffic model).
    pub population: u64,
    /// Accumulated quantity (emission mass in the traffic model).
    pub quantity: f64,
}

/// A region publish issued during a step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Publication {
    pub region: RegionId,
    pub src: EntityId,
    pub seq: u64,
    pub step: u64,
    pub payload: Vec<u8>,
}

/// Everything an entity may touch while stepping.
pub struct StepContext<'a> {
    id: EntityId,
    level: LevelId,
    step: u64,
    seed: u64,
    rng: RandomStream,
    next_seq: &'a mut u64,
    outbox: &'a mut Vec<EventMessage>,
    publications: &'a mut Vec<Publication>,
    violation: Option<SimError>,
}

impl<'a> StepContext<'a> {
    pub fn new(
        id: EntityId,
        level: LevelId,
        step: u64,
        seed: u64,
        next_seq: &'a mut u64,
        outbox: &'a mut Vec<EventMessage>,
        publications: &'a mut Vec<Publication>,
    ) -> Self {
        StepContext {
            id,
            level,
            step,
            seed,
            rng: RandomStream::new(seed, id, step),
            next_seq,
            outbox,
            publications,
            violation: None,
        }
    }

    pub fn id(&self) -> EntityId {
        self.id
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn level(&self) -> LevelId {
        self.level
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// This entity's stream for the current step.
    pub fn rng(&mut self) -> &mut RandomStream {
        &mut self.rng
    }

    /// Stream of a sub-entity (e.g. a micro vehicle) at an arbitrary step index.
    pub fn stream_for(&self, entity: EntityId, step: u64) -> RandomStream {
        RandomStream::new(self.seed, entity, step)
    }

    /// Sends with the minimum latency of one step.
    pub fn send(&mut self, dst: EntityId, payload: Vec<u8>) {
        let at = self.step + 1;
        // cannot fail: latency is exactly one step
        let _ = self.send_at(dst, at, payload);
    }

    pub fn send_at(&mut self, dst: EntityId, deliver_step: u64, payload: Vec<u8>) -> Result<()> {
        if deliver_step <= self.step {
            let detail = format!("message to {dst} scheduled for step {deliver_step}, must be > {}", self.step);
            let (step, entity) = (self.step, self.id);
            self.violation.get_or_insert_with(|| SimError::Contract {
                step,
                entity,
                detail: detail.clone(),
            });
            return Err(SimError::Contract { step, entity, detail });
        }
        let seq = *self.next_seq;
        *self.next_seq += 1;
        self.outbox.push(EventMessage {
            src: self.id,
            dst,
            send_step: VirtualTime::new(self.step, self.level),
            deliver_step: VirtualTime::new(deliver_step, LevelId::COARSE),
            seq,
            payload,
        });
        Ok(())
    }

    /// Publishes to a region; members receive it at the next step.
    pub fn publish(&mut self, region: RegionId, payload: Vec<u8>) {
        let seq = *self.next_seq;
        *self.next_seq += 1;
        self.publications.push(Publication {
            region,
            src: self.id,
            seq,
            step: self.step,
            payload,
        });
    }

    /// First contract violation recorded during the step, if any.
    pub fn take_violation(&mut self) -> Option<SimError> {
        self.violation.take()
    }
}

/// Behaviour of every entity in a run.
///
/// `step` must be a pure function of `(state, inbox, ctx)`: all randomness
/// comes from the context streams and no state is shared between entities
/// except through messages. State serialization must be canonical (no hash
/// maps), since digests and migration both go through it.
pub trait Model: Sync {
    type State: Clone + Send + Sync + Serialize + DeserializeOwned + 'static;

    fn step(&self, ctx: &mut StepContext<'_>, state: &Self::State, inbox: &[EventMessage]) -> Result<Self::State>;

    fn tally(&self, _state: &Self::State) -> Tally {
        Tally::default()
    }

    /// Scalar fed to automatic refinement triggers.
    fn observe(&self, _id: EntityId, _state: &Self::State) -> Option<f64> {
        None
    }

    /// Builds the fine-level entity that replaces `region` while the session runs.
    fn refine(
        &self,
        session: &RefinementSession,
        _region: &[(EntityId, &Self::State)],
    ) -> Result<SimulatedEntity<Self::State>> {
        Err(SimError::Refinement(format!(
            "model does not support refinement (session {})",
            session.id.0
        )))
    }

    /// Folds the fine entity back into new states for the frozen region.
    fn coarsen(
        &self,
        session: &RefinementSession,
        _fine: &Self::State,
        _region: &[(EntityId, &Self::State)],
    ) -> Result<(Vec<(EntityId, Self::State)>, SessionAudit)> {
        Err(SimError::Refinement(format!(
            "model does not support coarsening (session {})",
            session.id.0
        )))
    }
}
