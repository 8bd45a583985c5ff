use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::entity::{EntityId, EventMessage, SimulatedEntity};
use super::model::{Model, Publication, StepContext, Tally};
use super::report::{Progress, RunCounters, RunReport, SessionRecord, StepMetrics};
use super::time::{LevelId, VirtualTime};
use super::topics::Topics;
use super::trace::{entity_digest, Digest, Trace};
use crate::error::{Result, SimError};
use crate::migration::MigrationParams;
use crate::multilevel::{self, Coordinator};
use crate::pads::{FaultHook, Jitter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KernelConfig {
    pub seed: u64,
}

/// An entity plus the bookkeeping that must travel with it on migration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slot<S> {
    pub entity: SimulatedEntity<S>,
    pub next_seq: u64,
}

impl<S> Slot<S> {
    pub fn new(entity: SimulatedEntity<S>) -> Self {
        Slot { entity, next_seq: 0 }
    }
}

/// Registered entities and pending messages at a step boundary.
#[derive(Debug, Clone)]
pub struct SimulationState<S> {
    pub seed: u64,
    pub clock: u64,
    pub slots: BTreeMap<EntityId, Slot<S>>,
    pub pending: BTreeMap<u64, Vec<EventMessage>>,
    /// Entities replaced by a fine-level session; not stepped.
    pub frozen: BTreeSet<EntityId>,
    /// Frozen entity -> session entity that receives its messages.
    pub aliases: BTreeMap<EntityId, EntityId>,
}

impl<S: Serialize> SimulationState<S> {
    pub fn entity_ids(&self) -> Vec<EntityId> {
        self.slots.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn digests(&self) -> Result<Vec<(EntityId, Digest)>> {
        self.slots
            .values()
            .map(|s| Ok((s.entity.id, entity_digest(s.entity.id, s.entity.kind, s.entity.level, &s.entity.state)?)))
            .collect()
    }
}

/// Registers the factory's entities. Ids must be exactly `0..N` at level 0.
pub fn init_simulation<S>(config: &KernelConfig, entities: Vec<SimulatedEntity<S>>) -> Result<SimulationState<S>> {
    let mut slots = BTreeMap::new();
    for e in entities {
        if e.level != LevelId::COARSE {
            return Err(SimError::Construction(format!("entity {} created at {}, expected level 0", e.id, e.level)));
        }
        let id = e.id;
        if slots.insert(id, Slot::new(e)).is_some() {
            return Err(SimError::Construction(format!("duplicate entity id {id}")));
        }
    }
    if let Some((last, _)) = slots.iter().next_back() {
        if last.0 as usize + 1 != slots.len() {
            return Err(SimError::Construction(format!(
                "entity ids must be contiguous from 0; got {} entities with max id {}",
                slots.len(),
                last
            )));
        }
    }
    Ok(SimulationState {
        seed: config.seed,
        clock: 0,
        slots,
        pending: BTreeMap::new(),
        frozen: BTreeSet::new(),
        aliases: BTreeMap::new(),
    })
}

/// Knobs shared by the sequential and parallel executors. The parallel-only
/// fields are ignored by [`run_sequential_with`].
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub horizon: u64,
    pub coordinator: Option<Coordinator>,
    pub topics: Topics,
    pub migration: Option<MigrationParams>,
    pub jitter: Option<Jitter>,
    pub fault: Option<FaultHook>,
    /// Bumped after every completed step.
    pub progress: Option<Progress>,
}

impl RunOptions {
    pub fn new(horizon: u64) -> Self {
        RunOptions {
            horizon,
            ..Default::default()
        }
    }
}

/// Runs every entity once per step in ascending id order.
pub fn run_sequential<M: Model>(model: &M, state: SimulationState<M::State>, horizon: u64) -> Result<Trace> {
    Ok(run_sequential_with(model, state, &RunOptions::new(horizon))?.trace)
}

pub fn run_sequential_with<M: Model>(
    model: &M,
    mut state: SimulationState<M::State>,
    opts: &RunOptions,
) -> Result<RunReport> {
    advance_sequential(model, &mut state, opts)
}

/// Advances `state` by `opts.horizon` steps and leaves it at the new clock.
pub fn advance_sequential<M: Model>(
    model: &M,
    state: &mut SimulationState<M::State>,
    opts: &RunOptions,
) -> Result<RunReport> {
    let mut coordinator = opts.coordinator.clone();
    let SimulationState {
        seed,
        clock,
        slots,
        pending,
        frozen,
        aliases,
    } = state;
    let seed = *seed;
    let mut counters = RunCounters::default();
    let mut metrics = Vec::with_capacity(opts.horizon as usize);
    let mut sessions: Vec<SessionRecord> = Vec::new();
    let mut active: BTreeSet<multilevel::SessionId> = BTreeSet::new();

    let mut trace = Trace::new(
        slots
            .values()
            .map(|s| Ok((s.entity.id, entity_digest(s.entity.id, s.entity.kind, s.entity.level, &s.entity.state)?)))
            .collect::<Result<Vec<_>>>()?,
    );

    let start = *clock;
    for step in start..start + opts.horizon {
        let started = Instant::now();

        if let Some(coord) = coordinator.as_mut() {
            let observations = coord
                .watched_entities()
                .filter(|id| !frozen.contains(id))
                .filter_map(|id| slots.get(&id).and_then(|s| model.observe(id, &s.entity.state)).map(|v| (id, v)))
                .collect();
            let plan = coord.plan_boundary(step, &observations)?;
            for session in &plan.end {
                let audit = multilevel::end_session(model, slots, frozen, aliases, session)?;
                counters.off_boundary_deliveries += audit.off_boundary_deliveries;
                sessions.push(SessionRecord {
                    id: session.id,
                    region: session.region.clone(),
                    s0: session.s0,
                    s1: session.s1,
                    trigger: session.trigger,
                    vehicles_in: audit.vehicles_in,
                    vehicles_out: audit.vehicles_out,
                    fine_steps: audit.fine_steps,
                    detail: audit.detail,
                });
                active.remove(&session.id);
            }
            for session in &plan.start {
                multilevel::start_session(model, slots, frozen, aliases, session)?;
                active.insert(session.id);
            }
        }

        if let Some((&first, _)) = pending.iter().next() {
            if first < step {
                return Err(SimError::Causality {
                    lp: 0,
                    deliver_step: first,
                    completed: step - 1,
                });
            }
        }

        let mut inboxes: BTreeMap<EntityId, Vec<EventMessage>> = BTreeMap::new();
        for msg in pending.remove(&step).unwrap_or_default() {
            let target = aliases.get(&msg.dst).copied().unwrap_or(msg.dst);
            if !slots.contains_key(&target) {
                return Err(SimError::Routing(msg.dst));
            }
            counters.delivered += 1;
            inboxes.entry(target).or_default().push(msg);
        }

        let mut outbox = Vec::new();
        let mut publications: Vec<Publication> = Vec::new();
        let mut updates = Vec::with_capacity(slots.len());
        for (id, slot) in slots.iter_mut() {
            if frozen.contains(id) {
                continue;
            }
            let mut inbox = inboxes.remove(id).unwrap_or_default();
            inbox.sort_unstable_by_key(EventMessage::order_key);
            let mut ctx = StepContext::new(
                *id,
                slot.entity.level,
                step,
                seed,
                &mut slot.next_seq,
                &mut outbox,
                &mut publications,
            );
            let next = model.step(&mut ctx, &slot.entity.state, &inbox)?;
            if let Some(v) = ctx.take_violation() {
                return Err(v);
            }
            updates.push((*id, next));
        }
        for (id, next) in updates {
            if let Some(slot) = slots.get_mut(&id) {
                slot.entity.state = next;
            }
        }

        let local_msgs = outbox.len() as u64;
        for msg in outbox {
            let target = aliases.get(&msg.dst).copied().unwrap_or(msg.dst);
            if !slots.contains_key(&target) {
                return Err(SimError::Routing(msg.dst));
            }
            counters.sent += 1;
            pending.entry(msg.deliver_step.step).or_default().push(msg);
        }
        for publication in publications {
            counters.publications += 1;
            let Some(members) = opts.topics.members(publication.region) else {
                return Err(SimError::Protocol(format!("publish to unknown region {}", publication.region.0)));
            };
            counters.publication_deliveries += u64::from(!members.is_empty());
            for &dst in members {
                counters.sent += 1;
                pending.entry(step + 1).or_default().push(EventMessage {
                    src: publication.src,
                    dst,
                    send_step: VirtualTime::coarse(step),
                    deliver_step: VirtualTime::coarse(step + 1),
                    seq: publication.seq,
                    payload: publication.payload.clone(),
                });
            }
        }

        let mut entries = Vec::with_capacity(slots.len());
        let mut tally = Tally::default();
        for (id, slot) in slots.iter() {
            let e = &slot.entity;
            entries.push((*id, entity_digest(*id, e.kind, e.level, &e.state)?));
            if !frozen.contains(id) {
                let t = model.tally(&e.state);
                tally.population += t.population;
                tally.quantity += t.quantity;
            }
        }
        trace.push_step(step, entries);
        metrics.push(StepMetrics {
            step,
            lp_loads: vec![slots.len()],
            local_msgs,
            remote_msgs: 0,
            bytes_remote: 0,
            active_sessions: active.len(),
            population: tally.population,
            quantity: tally.quantity,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
        if let Some(p) = &opts.progress {
            p.set(step + 1 - start);
        }
    }

    *clock = start + opts.horizon;
    counters.dropped_at_horizon = pending.values().map(|v| v.len() as u64).sum();
    Ok(RunReport {
        trace,
        metrics,
        sessions,
        migrations: Vec::new(),
        counters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Counter, CounterModel, PingPong, PingPongModel};


    fn counters(n: u64) -> Vec<SimulatedEntity<Counter>> {
        (0..n).map(|i| SimulatedEntity::new(EntityId(i), 0, Counter::default())).collect()
    }

    #[test]
    fn empty_config_registers_nothing() {
        let st = init_simulation::<Counter>(&KernelConfig { seed: 1 }, vec![]).unwrap();
        assert!(st.is_empty());
        assert_eq!(st.clock, 0);
        assert!(st.pending.is_empty());
    }

    #[test]
    fn ids_are_registered_at_level_zero() {
        let st = init_simulation(&KernelConfig { seed: 42 }, counters(10)).unwrap();
        assert_eq!(st.entity_ids(), (0..10).map(EntityId).collect::<Vec<_>>());
        assert!(st.slots.values().all(|s| s.entity.level == LevelId::COARSE));
        let again = init_simulation(&KernelConfig { seed: 42 }, counters(10)).unwrap();
        assert_eq!(st.digests().unwrap(), again.digests().unwrap());
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let mut es = counters(3);
        es[2].id = EntityId(1);
        let err = init_simulation(&KernelConfig { seed: 1 }, es).unwrap_err();
        assert!(matches!(err, SimError::Construction(_)), "{err}");
    }

    #[test]
    fn empty_model_yields_empty_steps() {
        let st = init_simulation::<Counter>(&KernelConfig { seed: 1 }, vec![]).unwrap();
        let trace = run_sequential(&CounterModel, st, 5).unwrap();
        assert_eq!(trace.len(), 5);
        assert!(trace.steps.iter().all(|r| r.entries.is_empty()));
    }

    #[test]
    fn counter_reaches_horizon() {
        let st = init_simulation(&KernelConfig { seed: 1 }, counters(1)).unwrap();
        let trace = run_sequential(&CounterModel, st, 3).unwrap();
        let expected = entity_digest(EntityId(0), 0, LevelId::COARSE, &Counter { value: 3 }).unwrap();
        assert_eq!(trace.steps[2].entries, vec![(EntityId(0), expected)]);
    }

    #[test]
    fn ping_pong_round_trip_takes_two_steps() {
        // A sends at 0; B receives at 1 and replies; A receives at 2; B at 3.
        // Steps 0..=3 leave the reply sent at 3 in flight.
        let es = vec![
            SimulatedEntity::new(EntityId(0), 0, PingPong { peer: EntityId(1), starts: true, received: 0 }),
            SimulatedEntity::new(EntityId(1), 0, PingPong { peer: EntityId(0), starts: false, received: 0 }),
        ];
        let mut st = init_simulation(&KernelConfig { seed: 1 }, es).unwrap();
        let report = advance_sequential(&PingPongModel, &mut st, &RunOptions::new(4)).unwrap();
        assert_eq!(report.counters.sent, report.counters.delivered + report.counters.dropped_at_horizon);
        assert_eq!(report.counters.dropped_at_horizon, 1);
        assert_eq!(st.slots[&EntityId(0)].entity.state.received, 1);
        assert_eq!(st.slots[&EntityId(1)].entity.state.received, 2);
        // one more step delivers the in-flight ball: 2 each
        advance_sequential(&PingPongModel, &mut st, &RunOptions::new(1)).unwrap();
        assert_eq!(st.slots[&EntityId(0)].entity.state.received, 2);
        assert_eq!(st.slots[&EntityId(1)].entity.state.received, 2);
    }

    #[test]
    fn traces_are_deterministic() {
        let a = init_simulation(&KernelConfig { seed: 7 }, counters(4)).unwrap();
        let b = a.clone();
        assert_eq!(
            run_sequential(&CounterModel, a, 10).unwrap(),
            run_sequential(&CounterModel, b, 10).unwrap()
        );
    }
}
