//! Conservative time-stepped executor: one thread per LP, channels between
//! them, and an end-of-step barrier built from EOS markers.
//!
//! Step `s` on an LP: apply the boundary directive (sessions, migrations),
//! deliver messages due at `s`, step residents in id order, route their
//! output, send one EOS(s) to every peer after the last frame for `s`, then
//! wait for EOS(s) from all peers. Channels are FIFO per sender, so EOS(s)
//! from a peer means everything it sent during `s` is already here.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicBool, Ordering};
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};
use serde::{Deserialize, Serialize};

use super::directory::{route_message, CommunicationStats, Directory, Move};
use super::eos::{EosMessage, EosTracker};
use super::frame::{decode_body, encode_frame, split_frame, FrameTag};
use super::partition::Partition;
use super::region::RegionRegistry;
use crate::error::{Result, SimError};
use crate::kernel::{
    entity_digest, Digest, EntityId, EventMessage, MigrationRecord, Model, Publication, RandomStream, RunCounters,
    RunOptions, RunReport, SessionRecord, SimulationState, Slot, StepContext, StepMetrics, Trace, VirtualTime,
};
use crate::migration::{decode_slot, encode_slot, MigrationState, PlannedMove};
use crate::multilevel::{self, Coordinator, RefinementSession};

/// Random sender-side delay before every frame, to shake out ordering bugs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Jitter {
    pub max_delay_us: u64,
    pub seed: u64,
}

/// Test hook: LP `lp` corrupts one resident's state at `step`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultHook {
    pub lp: usize,
    pub step: u64,
}

const POLL: Duration = Duration::from_millis(20);
const STALL: Duration = Duration::from_secs(120);
const FAULT_SALT: u64 = 0xfa01_7fa0_17fa_017f;

#[derive(Serialize, Deserialize)]
struct ModelBatch {
    from: usize,
    msgs: Vec<EventMessage>,
}

#[derive(Serialize, Deserialize)]
struct PublishBatch {
    from: usize,
    publications: Vec<Publication>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LpStats {
    from: usize,
    boundary: u64,
    observations: Vec<(EntityId, f64)>,
    /// (sender, destination LP, count) for the step before `boundary`.
    interactions: Vec<(EntityId, usize, u64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Directive {
    boundary: u64,
    end: Vec<RefinementSession>,
    /// Session and the LP that hosts it.
    start: Vec<(RefinementSession, usize)>,
    moves: Vec<PlannedMove>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Transfer {
    boundary: u64,
    entity: EntityId,
    slot: Vec<u8>,
    pending: Vec<EventMessage>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Control {
    Stats(LpStats),
    Directive(Directive),
    Transfer(Transfer),
}

/// Boundary decisions; lives on LP 0 only.
struct Planner {
    coordinator: Option<Coordinator>,
    migration: Option<MigrationState>,
    active: Vec<RefinementSession>,
}

impl Planner {
    fn plan(&mut self, boundary: u64, stats: Vec<LpStats>, directory: &Directory) -> Result<Directive> {
        let mut observations = BTreeMap::new();
        for st in &stats {
            observations.extend(st.observations.iter().copied());
        }
        if let Some(mig) = self.migration.as_mut() {
            if boundary > 0 {
                for st in &stats {
                    for &(src, lp, n) in &st.interactions {
                        mig.matrix.record_count(src, lp, boundary - 1, n);
                    }
                }
                mig.matrix.evict(boundary - 1);
            }
        }
        let plan = match self.coordinator.as_mut() {
            Some(c) => c.plan_boundary(boundary, &observations)?,
            None => Default::default(),
        };

        let mut sim = directory.clone();
        for s in &plan.end {
            sim.remove(s.entity);
            self.active.retain(|a| a.id != s.id);
        }
        let mut moves = Vec::new();
        let mut start = Vec::new();
        for s in &plan.start {
            let mut by_lp: BTreeMap<usize, usize> = BTreeMap::new();
            for id in &s.region {
                let lp = sim
                    .owner(*id)
                    .ok_or_else(|| SimError::Refinement(format!("session {} region entity {id} does not exist", s.id)))?;
                *by_lp.entry(lp).or_default() += 1;
            }
            // most region entities already there; lowest LP on ties
            let target = by_lp
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(&lp, _)| lp)
                .unwrap_or(0);
            for id in &s.region {
                let from = sim.owner(*id).expect("checked above");
                if from != target {
                    let m = PlannedMove {
                        entity: *id,
                        from,
                        to: target,
                        external_ratio: None,
                    };
                    sim.apply_moves(&[m.as_move()])?;
                    moves.push(m);
                }
            }
            start.push((s.clone(), target));
        }
        if let Some(mig) = self.migration.as_mut() {
            let mut pinned = BTreeSet::new();
            for s in self.active.iter().chain(&plan.start) {
                pinned.extend(s.region.iter().copied());
                pinned.insert(s.entity);
            }
            let mplan = mig.evaluate(&sim, &pinned, boundary);
            mig.note_moves(&mplan);
            moves.extend(mplan.moves);
        }
        self.active.extend(plan.start.iter().cloned());
        Ok(Directive {
            boundary,
            end: plan.end,
            start,
            moves,
        })
    }
}

struct LocalMetrics {
    load: usize,
    comm: CommunicationStats,
    population: u64,
    quantities: Vec<(EntityId, f64)>,
    active_sessions: usize,
    wall_ms: f64,
}

struct LpOutput<S> {
    me: usize,
    steps: Vec<Vec<(EntityId, Digest)>>,
    metrics: Vec<LocalMetrics>,
    sessions: Vec<SessionRecord>,
    migrations: Vec<MigrationRecord>,
    counters: RunCounters,
    slots: BTreeMap<EntityId, Slot<S>>,
    pending: BTreeMap<u64, Vec<EventMessage>>,
    frozen: BTreeSet<EntityId>,
    aliases: BTreeMap<EntityId, EntityId>,
}

struct Lp<'a, M: Model> {
    me: usize,
    n: usize,
    model: &'a M,
    opts: &'a RunOptions,
    seed: u64,
    rx: Receiver<Vec<u8>>,
    tx: Vec<Sender<Vec<u8>>>,
    abort: &'a AtomicBool,
    jitter: Option<(u64, RandomStream)>,
    slots: BTreeMap<EntityId, Slot<M::State>>,
    frozen: BTreeSet<EntityId>,
    aliases: BTreeMap<EntityId, EntityId>,
    pending: BTreeMap<u64, Vec<EventMessage>>,
    dir: Directory,
    registry: RegionRegistry,
    eos: EosTracker,
    controls: Vec<Control>,
    completed: Option<u64>,
    current: u64,
    coordinated: bool,
    watched: BTreeSet<EntityId>,
    interactions: BTreeMap<(EntityId, usize), u64>,
    planner: Option<Planner>,
    active_sessions: usize,
    out: LpOutput<M::State>,
}

impl<'a, M: Model> Lp<'a, M> {
    fn send(&mut self, to: usize, frame: Vec<u8>) -> Result<()> {
        if let Some((max, rng)) = self.jitter.as_mut() {
            let us = rng.below(*max + 1);
            if us > 0 {
                thread::sleep(Duration::from_micros(us));
            }
        }
        self.tx[to]
            .send(frame)
            .map_err(|_| SimError::Aborted(format!("LP {to} is gone")))
    }

    fn send_control(&mut self, to: usize, c: &Control) -> Result<()> {
        let f = encode_frame(FrameTag::Control, c)?;
        self.send(to, f)
    }

    fn recv(&mut self) -> Result<Vec<u8>> {
        let deadline = Instant::now() + STALL;
        loop {
            if self.abort.load(Ordering::Relaxed) {
                return Err(SimError::Aborted(format!("LP {} stopped because a peer failed", self.me)));
            }
            match self.rx.recv_timeout(POLL) {
                Ok(f) => return Ok(f),
                Err(RecvTimeoutError::Timeout) if Instant::now() < deadline => {}
                Err(RecvTimeoutError::Timeout) => {
                    return Err(SimError::Protocol(format!(
                        "LP {} saw no frame for {}s during step {}",
                        self.me,
                        STALL.as_secs(),
                        self.current
                    )))
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(SimError::Aborted(format!("LP {} lost its peers", self.me)))
                }
            }
        }
    }

    /// Receives and files one frame.
    fn pump(&mut self) -> Result<()> {
        let frame = self.recv()?;
        let (tag, body) = split_frame(&frame)?;
        match tag {
            FrameTag::Model => {
                let batch: ModelBatch = decode_body(body)?;
                for m in batch.msgs {
                    self.accept(m)?;
                }
            }
            FrameTag::Eos => {
                let e: EosMessage = decode_body(body)?;
                self.eos.record(e, self.current)?;
            }
            FrameTag::Control => self.controls.push(decode_body(body)?),
            FrameTag::RegionPublish => {
                let batch: PublishBatch = decode_body(body)?;
                for p in &batch.publications {
                    self.expand_publication(p)?;
                }
            }
        }
        Ok(())
    }

    fn accept(&mut self, m: EventMessage) -> Result<()> {
        if let Some(done) = self.completed {
            if m.deliver_step.step <= done {
                self.out.counters.causality_violations += 1;
                return Err(SimError::Causality {
                    lp: self.me,
                    deliver_step: m.deliver_step.step,
                    completed: done,
                });
            }
        }
        self.pending.entry(m.deliver_step.step).or_default().push(m);
        Ok(())
    }

    /// Turns a publish into messages for the region members resident here.
    fn expand_publication(&mut self, p: &Publication) -> Result<()> {
        let members = self
            .opts
            .topics
            .members(p.region)
            .ok_or_else(|| SimError::Protocol(format!("publish to unknown region {}", p.region.0)))?;
        self.out.counters.publication_deliveries += 1;
        let mine: Vec<EntityId> = members
            .iter()
            .copied()
            .filter(|m| self.dir.owner(self.dir.resolve(*m)) == Some(self.me))
            .collect();
        for dst in mine {
            self.out.counters.sent += 1;
            self.accept(EventMessage {
                src: p.src,
                dst,
                send_step: VirtualTime::coarse(p.step),
                deliver_step: VirtualTime::coarse(p.step + 1),
                seq: p.seq,
                payload: p.payload.clone(),
            })?;
        }
        Ok(())
    }

    fn take_control(&mut self, mut pred: impl FnMut(&Control) -> bool) -> Result<Control> {
        loop {
            if let Some(i) = self.controls.iter().position(&mut pred) {
                return Ok(self.controls.remove(i));
            }
            self.pump()?;
        }
    }

    fn boundary(&mut self, b: u64) -> Result<()> {
        let observations: Vec<(EntityId, f64)> = self
            .watched
            .iter()
            .filter(|id| !self.frozen.contains(id))
            .filter_map(|id| self.slots.get(id).and_then(|s| self.model.observe(*id, &s.entity.state)).map(|v| (*id, v)))
            .collect();
        let interactions = std::mem::take(&mut self.interactions)
            .into_iter()
            .map(|((src, lp), n)| (src, lp, n))
            .collect();
        let stats = LpStats {
            from: self.me,
            boundary: b,
            observations,
            interactions,
        };
        let directive = if self.me == 0 {
            let mut all = vec![stats];
            for _ in 1..self.n {
                match self.take_control(|c| matches!(c, Control::Stats(s) if s.boundary == b))? {
                    Control::Stats(s) => all.push(s),
                    _ => unreachable!(),
                }
            }
            all.sort_by_key(|s| s.from);
            let planner = self.planner.as_mut().expect("LP 0 plans");
            let d = planner.plan(b, all, &self.dir)?;
            let c = Control::Directive(d.clone());
            for peer in 1..self.n {
                self.send_control(peer, &c)?;
            }
            d
        } else {
            self.send_control(0, &Control::Stats(stats))?;
            match self.take_control(|c| matches!(c, Control::Directive(d) if d.boundary == b))? {
                Control::Directive(d) => d,
                _ => unreachable!(),
            }
        };
        self.apply_directive(directive)
    }

    fn apply_directive(&mut self, d: Directive) -> Result<()> {
        let b = d.boundary;
        for session in &d.end {
            if self.dir.owner(session.entity) == Some(self.me) {
                let audit = multilevel::end_session(self.model, &mut self.slots, &mut self.frozen, &mut self.aliases, session)?;
                self.out.counters.off_boundary_deliveries += audit.off_boundary_deliveries;
                self.out.sessions.push(SessionRecord {
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
            }
            self.dir.remove(session.entity);
            for id in &session.region {
                self.dir.unalias(*id);
            }
            self.active_sessions -= 1;
        }

        let outgoing: Vec<PlannedMove> = d.moves.iter().copied().filter(|m| m.from == self.me).collect();
        for m in &outgoing {
            let slot = self
                .slots
                .remove(&m.entity)
                .ok_or_else(|| SimError::Protocol(format!("LP {} told to ship {} it does not hold", self.me, m.entity)))?;
            let mut pending = Vec::new();
            for msgs in self.pending.values_mut() {
                let (go, stay): (Vec<_>, Vec<_>) = std::mem::take(msgs).into_iter().partition(|x| x.dst == m.entity);
                *msgs = stay;
                pending.extend(go);
            }
            let t = Control::Transfer(Transfer {
                boundary: b,
                entity: m.entity,
                slot: encode_slot(&slot)?,
                pending,
            });
            self.send_control(m.to, &t)?;
        }
        self.pending.retain(|_, v| !v.is_empty());
        let moves: Vec<Move> = d.moves.iter().map(PlannedMove::as_move).collect();
        self.dir.apply_moves(&moves)?;
        let me = self.me;
        for m in d.moves.iter().filter(|m| m.to == me) {
            let e = m.entity;
            let Control::Transfer(t) = self.take_control(|c| matches!(c, Control::Transfer(t) if t.boundary == b && t.entity == e))?
            else {
                unreachable!()
            };
            let slot: Slot<M::State> = decode_slot(&t.slot)?;
            if slot.entity.id != e {
                return Err(SimError::Protocol(format!("transfer for {e} carried {}", slot.entity.id)));
            }
            self.slots.insert(e, slot);
            for msg in t.pending {
                self.accept(msg)?;
            }
        }

        for (session, lp) in &d.start {
            self.dir.insert(session.entity, *lp);
            for id in &session.region {
                self.dir.alias(*id, session.entity);
            }
            if *lp == self.me {
                multilevel::start_session(self.model, &mut self.slots, &mut self.frozen, &mut self.aliases, session)?;
            }
            self.active_sessions += 1;
        }
        if self.me == 0 {
            self.out.migrations.extend(d.moves.iter().map(|m| MigrationRecord {
                step: b,
                entity: m.entity,
                from_lp: m.from,
                to_lp: m.to,
                external_ratio: m.external_ratio,
            }));
        }
        Ok(())
    }

    fn step_once(&mut self, s: u64) -> Result<()> {
        let started = Instant::now();
        self.current = s;
        if self.coordinated {
            self.boundary(s)?;
        }
        self.registry.sync(&self.opts.topics, &self.dir, s);

        if let Some((&first, _)) = self.pending.iter().next() {
            if first < s {
                self.out.counters.causality_violations += 1;
                return Err(SimError::Causality {
                    lp: self.me,
                    deliver_step: first,
                    completed: s - 1,
                });
            }
        }
        let mut inboxes: BTreeMap<EntityId, Vec<EventMessage>> = BTreeMap::new();
        for msg in self.pending.remove(&s).unwrap_or_default() {
            let target = self.dir.resolve(msg.dst);
            if !self.slots.contains_key(&target) {
                return Err(SimError::Routing(msg.dst));
            }
            self.out.counters.delivered += 1;
            inboxes.entry(target).or_default().push(msg);
        }

        let fault = self.opts.fault.filter(|f| f.lp == self.me && f.step == s);
        let mut fault_done = false;
        let mut outbox = Vec::new();
        let mut publications = Vec::new();
        let mut updates = Vec::with_capacity(self.slots.len());
        let mut comm = CommunicationStats::default();
        for (id, slot) in self.slots.iter_mut() {
            if self.frozen.contains(id) {
                continue;
            }
            comm.entities_stepped += 1;
            let mut inbox = inboxes.remove(id).unwrap_or_default();
            inbox.sort_unstable_by_key(EventMessage::order_key);
            let mut ctx = StepContext::new(
                *id,
                slot.entity.level,
                s,
                self.seed,
                &mut slot.next_seq,
                &mut outbox,
                &mut publications,
            );
            let mut next = self.model.step(&mut ctx, &slot.entity.state, &inbox)?;
            if let Some(v) = ctx.take_violation() {
                return Err(v);
            }
            if fault.is_some() && !fault_done {
                // step again under a different seed and keep only the state
                let (mut seq, mut junk, mut junk_pubs) = (slot.next_seq, Vec::new(), Vec::new());
                let mut ctx = StepContext::new(*id, slot.entity.level, s, self.seed ^ FAULT_SALT, &mut seq, &mut junk, &mut junk_pubs);
                next = self.model.step(&mut ctx, &next, &[])?;
                fault_done = true;
            }
            updates.push((*id, next));
        }
        for (id, next) in updates {
            if let Some(slot) = self.slots.get_mut(&id) {
                slot.entity.state = next;
            }
        }

        let mut batches: Vec<Vec<EventMessage>> = vec![Vec::new(); self.n];
        for msg in outbox {
            let lp = route_message(&self.dir, &msg, self.me, &mut comm)?;
            *self.interactions.entry((msg.src, lp)).or_default() += 1;
            self.out.counters.sent += 1;
            if lp == self.me {
                // delivery is at least one step out, so this cannot be late
                self.pending.entry(msg.deliver_step.step).or_default().push(msg);
            } else {
                batches[lp].push(msg);
            }
        }
        let mut pub_batches: Vec<Vec<Publication>> = vec![Vec::new(); self.n];
        for p in publications {
            if !self.opts.topics.contains(p.region) {
                return Err(SimError::Protocol(format!("publish to unknown region {}", p.region.0)));
            }
            self.out.counters.publications += 1;
            for lp in self.registry.recipients(p.region, s) {
                if lp == self.me {
                    self.expand_publication(&p)?;
                } else {
                    pub_batches[lp].push(p.clone());
                }
            }
        }

        self.completed = Some(s);
        for peer in 0..self.n {
            if peer == self.me {
                continue;
            }
            let msgs = std::mem::take(&mut batches[peer]);
            if !msgs.is_empty() {
                let f = encode_frame(FrameTag::Model, &ModelBatch { from: self.me, msgs })?;
                comm.bytes_remote += f.len() as u64;
                self.send(peer, f)?;
            }
            let publications = std::mem::take(&mut pub_batches[peer]);
            if !publications.is_empty() {
                let f = encode_frame(FrameTag::RegionPublish, &PublishBatch { from: self.me, publications })?;
                comm.bytes_remote += f.len() as u64;
                self.send(peer, f)?;
            }
            let f = encode_frame(FrameTag::Eos, &EosMessage { from: self.me, step: s })?;
            self.send(peer, f)?;
        }
        while !self.eos.is_complete(s) {
            self.pump()?;
        }
        self.eos.release(s);

        let mut entries = Vec::with_capacity(self.slots.len());
        let mut population = 0;
        let mut quantities = Vec::new();
        for (id, slot) in &self.slots {
            let e = &slot.entity;
            entries.push((*id, entity_digest(*id, e.kind, e.level, &e.state)?));
            if !self.frozen.contains(id) {
                let t = self.model.tally(&e.state);
                population += t.population;
                if t.quantity != 0.0 {
                    quantities.push((*id, t.quantity));
                }
            }
        }
        self.out.steps.push(entries);
        self.out.metrics.push(LocalMetrics {
            load: self.slots.len(),
            comm,
            population,
            quantities,
            active_sessions: self.active_sessions,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
        if self.me == 0 {
            if let Some(p) = &self.opts.progress {
                p.set(self.out.steps.len() as u64);
            }
        }
        Ok(())
    }

    fn run(mut self, start: u64, horizon: u64) -> Result<LpOutput<M::State>> {
        for s in start..start + horizon {
            self.step_once(s)?;
        }
        self.out.counters.max_eos_spread = self.eos.max_spread();
        self.out.counters.dropped_at_horizon = self.pending.values().map(|v| v.len() as u64).sum();
        let mut out = self.out;
        out.slots = self.slots;
        out.pending = self.pending;
        out.frozen = self.frozen;
        out.aliases = self.aliases;
        Ok(out)
    }
}

/// Runs `opts.horizon` steps on `partition.n_lps` threads.
pub fn run_parallel<M: Model>(
    model: &M,
    mut state: SimulationState<M::State>,
    partition: &Partition,
    opts: &RunOptions,
) -> Result<RunReport> {
    advance_parallel(model, &mut state, partition, opts)
}

/// Parallel counterpart of `advance_sequential`: same trace, same final state.
pub fn advance_parallel<M: Model>(
    model: &M,
    state: &mut SimulationState<M::State>,
    partition: &Partition,
    opts: &RunOptions,
) -> Result<RunReport> {
    let n = partition.n_lps;
    if n == 0 {
        return Err(SimError::Config("n_lps must be at least 1".into()));
    }
    if !state.frozen.is_empty() {
        return Err(SimError::Config("parallel runs must start with no active refinement session".into()));
    }
    for id in state.slots.keys() {
        match partition.lp_of(*id) {
            Some(lp) if lp < n => {}
            _ => return Err(SimError::Config(format!("partition does not place entity {id}"))),
        }
    }
    if let Some(p) = &opts.migration {
        p.validate()?;
    }
    if let Some(f) = &opts.fault {
        if f.lp >= n {
            return Err(SimError::Config(format!("fault hook names LP {} of {n}", f.lp)));
        }
    }

    let trace_init = state.digests()?;
    let dir = Directory::new(partition);
    let mut per_lp_slots: Vec<BTreeMap<EntityId, Slot<M::State>>> = (0..n).map(|_| BTreeMap::new()).collect();
    for (id, slot) in std::mem::take(&mut state.slots) {
        per_lp_slots[partition.assignment[&id]].insert(id, slot);
    }
    let mut per_lp_pending: Vec<BTreeMap<u64, Vec<EventMessage>>> = (0..n).map(|_| BTreeMap::new()).collect();
    for (step, msgs) in std::mem::take(&mut state.pending) {
        for m in msgs {
            let lp = dir.owner(dir.resolve(m.dst)).ok_or(SimError::Routing(m.dst))?;
            per_lp_pending[lp].entry(step).or_default().push(m);
        }
    }

    let watched: BTreeSet<EntityId> = opts.coordinator.as_ref().map(|c| c.watched_entities().collect()).unwrap_or_default();
    let coordinated = opts.coordinator.is_some() || opts.migration.is_some();
    let abort = AtomicBool::new(false);
    let (txs, rxs): (Vec<Sender<Vec<u8>>>, Vec<_>) = (0..n).map(|_| unbounded()).unzip();
    let start = state.clock;

    let mut lps = Vec::with_capacity(n);
    for (me, (rx, (slots, pending))) in rxs.into_iter().zip(per_lp_slots.into_iter().zip(per_lp_pending)).enumerate() {
        lps.push(Lp {
            me,
            n,
            model,
            opts,
            seed: state.seed,
            rx,
            tx: txs.clone(),
            abort: &abort,
            jitter: opts
                .jitter
                .map(|j| (j.max_delay_us, RandomStream::new(j.seed, EntityId(me as u64), 0))),
            slots,
            frozen: BTreeSet::new(),
            aliases: BTreeMap::new(),
            pending,
            dir: dir.clone(),
            registry: RegionRegistry::new(),
            eos: EosTracker::new(me, n),
            controls: Vec::new(),
            completed: start.checked_sub(1),
            current: start,
            coordinated,
            watched: watched.clone(),
            interactions: BTreeMap::new(),
            planner: (me == 0).then(|| Planner {
                coordinator: opts.coordinator.clone(),
                migration: opts.migration.map(MigrationState::new),
                active: Vec::new(),
            }),
            active_sessions: 0,
            out: LpOutput {
                me,
                steps: Vec::new(),
                metrics: Vec::new(),
                sessions: Vec::new(),
                migrations: Vec::new(),
                counters: RunCounters::default(),
                slots: BTreeMap::new(),
                pending: BTreeMap::new(),
                frozen: BTreeSet::new(),
                aliases: BTreeMap::new(),
            },
        });
    }
    drop(txs);

    let results: Vec<Result<LpOutput<M::State>>> = thread::scope(|scope| {
        let handles: Vec<_> = lps
            .into_iter()
            .map(|lp| {
                let abort = &abort;
                let me = lp.me;
                thread::Builder::new()
                    .name(format!("lp-{me}"))
                    .spawn_scoped(scope, move || {
                        let r = lp.run(start, opts.horizon);
                        if r.is_err() {
                            abort.store(true, Ordering::Relaxed);
                        }
                        r
                    })
                    .expect("spawn LP thread")
            })
            .collect();
        handles
            .into_iter()
            .enumerate()
            .map(|(i, h)| {
                h.join().unwrap_or_else(|_| {
                    abort.store(true, Ordering::Relaxed);
                    Err(SimError::Protocol(format!("LP {i} panicked")))
                })
            })
            .collect()
    });

    let mut outputs = Vec::with_capacity(n);
    let mut first_abort = None;
    for r in results {
        match r {
            Ok(o) => outputs.push(o),
            Err(SimError::Aborted(m)) => {
                first_abort.get_or_insert(SimError::Aborted(m));
            }
            Err(e) => return Err(e),
        }
    }
    if let Some(e) = first_abort {
        return Err(e);
    }
    outputs.sort_by_key(|o| o.me);
    Ok(merge(state, outputs, trace_init, start, opts.horizon))
}

fn merge<S>(
    state: &mut SimulationState<S>,
    outputs: Vec<LpOutput<S>>,
    initial: Vec<(EntityId, Digest)>,
    start: u64,
    horizon: u64,
) -> RunReport {
    let n = outputs.len();
    let mut trace = Trace::new(initial);
    let mut metrics = Vec::with_capacity(horizon as usize);
    let mut counters = RunCounters::default();
    let mut sessions = Vec::new();
    let mut migrations = Vec::new();
    for i in 0..horizon as usize {
        let mut entries = Vec::new();
        let mut m = StepMetrics {
            step: start + i as u64,
            lp_loads: vec![0; n],
            ..Default::default()
        };
        let mut quantities = Vec::new();
        for o in &outputs {
            entries.extend_from_slice(&o.steps[i]);
            let lm = &o.metrics[i];
            m.lp_loads[o.me] = lm.load;
            m.local_msgs += lm.comm.local_msgs;
            m.remote_msgs += lm.comm.remote_msgs;
            m.bytes_remote += lm.comm.bytes_remote;
            m.population += lm.population;
            m.wall_ms = m.wall_ms.max(lm.wall_ms);
            quantities.extend_from_slice(&lm.quantities);
            if o.me == 0 {
                m.active_sessions = lm.active_sessions;
            }
        }
        quantities.sort_by_key(|q| q.0);
        m.quantity = quantities.iter().fold(0.0, |acc, q| acc + q.1);
        trace.push_step(m.step, entries);
        metrics.push(m);
    }
    for o in outputs {
        let c = o.counters;
        counters.sent += c.sent;
        counters.delivered += c.delivered;
        counters.dropped_at_horizon += c.dropped_at_horizon;
        counters.causality_violations += c.causality_violations;
        counters.max_eos_spread = counters.max_eos_spread.max(c.max_eos_spread);
        counters.off_boundary_deliveries += c.off_boundary_deliveries;
        counters.publications += c.publications;
        counters.publication_deliveries += c.publication_deliveries;
        sessions.extend(o.sessions);
        migrations.extend(o.migrations);
        state.slots.extend(o.slots);
        for (step, msgs) in o.pending {
            state.pending.entry(step).or_default().extend(msgs);
        }
        state.frozen.extend(o.frozen);
        state.aliases.extend(o.aliases);
    }
    for msgs in state.pending.values_mut() {
        msgs.sort_by_key(|m| (m.dst, m.src, m.seq));
    }
    sessions.sort_by_key(|s| (s.s1, s.id));
    state.clock = start + horizon;
    RunReport {
        trace,
        metrics,
        sessions,
        migrations,
        counters,
    }
}
