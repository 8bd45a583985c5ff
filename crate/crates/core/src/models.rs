//! Small synthetic models used by tests, examples and benchmarks.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kernel::{EntityId, EventMessage, Model, RegionId, SimulatedEntity, StepContext, Tally};

/// Increments once per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counter {
    pub value: u64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CounterModel;

impl Model for CounterModel {
    type State = Counter;

    fn step(&self, _ctx: &mut StepContext<'_>, state: &Counter, _inbox: &[EventMessage]) -> Result<Counter> {
        Ok(Counter { value: state.value + 1 })
    }
}

/// Two entities bouncing one ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PingPong {
    pub peer: EntityId,
    pub starts: bool,
    pub received: u64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PingPongModel;

impl Model for PingPongModel {
    type State = PingPong;

    fn step(&self, ctx: &mut StepContext<'_>, state: &PingPong, inbox: &[EventMessage]) -> Result<PingPong> {
        let mut next = *state;
        if ctx.step() == 0 && state.starts {
            ctx.send(state.peer, Vec::new());
        }
        for _ in inbox {
            next.received += 1;
            ctx.send(state.peer, Vec::new());
        }
        Ok(next)
    }
}

/// Entity of the clique messaging workload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Chatter {
    pub clique: u32,
    pub steps: u64,
    pub sent: u64,
    pub received: u64,
    /// Order-sensitive hash of everything received.
    pub checksum: u64,
}

/// Entities split into `cliques` contiguous groups; each step every entity
/// sends `msgs_per_step` messages, to its own clique with probability
/// `intra`, with random latency in `1..=max_latency`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatterModel {
    pub n: u64,
    pub cliques: u32,
    pub msgs_per_step: u32,
    pub intra: f64,
    pub max_latency: u64,
    /// Publish to the sender's clique region every this many steps.
    pub publish_every: Option<u64>,
}

impl ChatterModel {
    /// `n` entities in two cliques, 4 messages per step, 95% intra-clique.
    pub fn two_cliques(n: u64) -> Self {
        ChatterModel {
            n,
            cliques: 2,
            msgs_per_step: 4,
            intra: 0.95,
            max_latency: 1,
            publish_every: None,
        }
    }

    pub fn clique_of(&self, id: EntityId) -> u32 {
        (id.0 * u64::from(self.cliques) / self.n.max(1)) as u32
    }

    fn clique_range(&self, c: u32) -> (u64, u64) {
        let k = u64::from(self.cliques);
        let lo = (u64::from(c) * self.n).div_ceil(k);
        let hi = ((u64::from(c) + 1) * self.n).div_ceil(k);
        (lo, hi)
    }

    pub fn entities(&self) -> Vec<SimulatedEntity<Chatter>> {
        (0..self.n)
            .map(|i| {
                let id = EntityId(i);
                SimulatedEntity::new(
                    id,
                    0,
                    Chatter {
                        clique: self.clique_of(id),
                        ..Default::default()
                    },
                )
            })
            .collect()
    }

    /// One region per clique, containing its members.
    pub fn topics(&self) -> crate::kernel::Topics {
        let mut t = crate::kernel::Topics::new();
        for c in 0..self.cliques {
            let (lo, hi) = self.clique_range(c);
            t.add_region(RegionId(c), (lo..hi).map(EntityId));
        }
        t
    }
}

impl Model for ChatterModel {
    type State = Chatter;

    fn step(&self, ctx: &mut StepContext<'_>, state: &Chatter, inbox: &[EventMessage]) -> Result<Chatter> {
        let mut next = *state;
        next.steps += 1;
        for m in inbox {
            next.received += 1;
            let word = m.payload.iter().fold(m.src.0 ^ m.seq.rotate_left(17), |h, b| h.rotate_left(5) ^ u64::from(*b));
            next.checksum = next.checksum.rotate_left(7) ^ word.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        }
        let me = ctx.id();
        for k in 0..self.msgs_per_step {
            let rng = ctx.rng();
            let own = state.clique;
            let target_clique = if self.cliques < 2 || rng.chance(self.intra) {
                own
            } else {
                let other = rng.below(u64::from(self.cliques) - 1) as u32;
                if other >= own {
                    other + 1
                } else {
                    other
                }
            };
            let (lo, hi) = self.clique_range(target_clique);
            let size = hi - lo;
            if size == 0 || (size == 1 && lo == me.0) {
                continue;
            }
            let mut dst = lo + rng.below(size);
            if dst == me.0 {
                dst = lo + (dst - lo + 1) % size;
            }
            let latency = 1 + rng.below(self.max_latency.max(1));
            let payload = [ctx.step().to_le_bytes(), u64::from(k).to_le_bytes()].concat();
            ctx.send_at(EntityId(dst), ctx.step() + latency, payload)?;
            next.sent += 1;
        }
        if let Some(every) = self.publish_every {
            if every > 0 && ctx.step().is_multiple_of(every) && me.0.is_multiple_of(7) {
                ctx.publish(RegionId(state.clique), ctx.step().to_le_bytes().to_vec());
            }
        }
        Ok(next)
    }

    fn tally(&self, state: &Chatter) -> Tally {
        Tally {
            population: state.received,
            quantity: 0.0,
        }
    }
}
