use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::macro_model::{CoarseVehicle, LinkEntity};
use super::messages::TrafficMsg;
use super::network::Network;
use super::region::{coarsen_region, refine_region, step_region, RegionEntity};
use crate::error::{Result, SimError};
use crate::kernel::{EntityId, EventMessage, LevelId, Model, RandomStream, SimulatedEntity, StepContext, Tally};
use crate::multilevel::{RefinementSession, SessionAudit};

pub const KIND_LINK: u32 = 1;
pub const KIND_REGION: u32 = 2;

/// Step key for initial destination draws.
const INIT_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TrafficState {
    Link(LinkEntity),
    Region(Box<RegionEntity>),
}

impl TrafficState {
    pub fn as_link(&self) -> Option<&LinkEntity> {
        match self {
            TrafficState::Link(l) => Some(l),
            TrafficState::Region(_) => None,
        }
    }
}

/// Link entities at level 0, one per arc, and region entities at level 1
/// while a session runs.
#[derive(Debug, Clone)]
pub struct TrafficModel {
    pub net: Arc<Network>,
}

impl TrafficModel {
    pub fn new(net: Network) -> Self {
        TrafficModel { net: Arc::new(net) }
    }

    /// One link entity per arc with `vehicles` spread round-robin over arcs
    /// that still have room. Destinations come from per-vehicle streams.
    pub fn initial_entities(&self, vehicles: u64, seed: u64) -> Result<Vec<SimulatedEntity<TrafficState>>> {
        let g = &self.net.graph;
        let capacity: u64 = g.arcs.iter().map(|a| u64::from(a.cell_count)).sum();
        if vehicles > capacity {
            return Err(SimError::Construction(format!(
                "{vehicles} vehicles exceed the network's {capacity} cells"
            )));
        }
        let mut links: Vec<LinkEntity> = (0..g.arc_count() as u32).map(LinkEntity::new).collect();
        let n_arcs = links.len() as u64;
        let mut cursor = 0u64;
        for tag in 0..vehicles {
            while links[(cursor % n_arcs) as usize].count() >= g.arcs[(cursor % n_arcs) as usize].cell_count {
                cursor += 1;
            }
            let a = (cursor % n_arcs) as usize;
            cursor += 1;
            let mut rng = RandomStream::new(seed, EntityId(tag), INIT_STREAM);
            let dest = self.net.pick_destination(g.arcs[a].to, &mut rng);
            links[a].vehicles.push_back(CoarseVehicle { tag, entered: 0, dest });
        }
        Ok(links
            .into_iter()
            .map(|l| SimulatedEntity::new(EntityId(u64::from(l.arc)), KIND_LINK, TrafficState::Link(l)))
            .collect())
    }

    fn step_link(&self, ctx: &mut StepContext<'_>, link: &LinkEntity, inbox: &[EventMessage]) -> Result<LinkEntity> {
        let mut arrivals = Vec::new();
        let mut credits: BTreeMap<u32, u32> = BTreeMap::new();
        for msg in inbox {
            match TrafficMsg::decode(&msg.payload)? {
                TrafficMsg::Offer { from_arc, count, .. } => *credits.entry(from_arc).or_default() += count,
                TrafficMsg::Vehicles { vehicles, .. } => arrivals.extend(vehicles),
            }
        }
        let step = ctx.step();
        let demand = self.net.demand.at(link.arc, step);
        let (next, out) = link.coarse_step(&self.net, step, arrivals, &credits, demand, ctx.rng());
        for (down, vehicles) in out.discharged {
            let msg = TrafficMsg::Vehicles {
                from_arc: link.arc,
                to_arc: down,
                vehicles,
            };
            ctx.send(EntityId(u64::from(down)), msg.encode()?);
        }
        for (up, count) in out.offers {
            let msg = TrafficMsg::Offer {
                from_arc: link.arc,
                to_arc: up,
                count,
            };
            ctx.send(EntityId(u64::from(up)), msg.encode()?);
        }
        Ok(next)
    }

    fn region_links<'a>(&self, region: &[(EntityId, &'a TrafficState)]) -> Result<Vec<(EntityId, &'a LinkEntity)>> {
        region
            .iter()
            .map(|(id, st)| match st {
                TrafficState::Link(l) if u64::from(l.arc) == id.0 => Ok((*id, l)),
                _ => Err(SimError::Refinement(format!("entity {id} is not a level-0 link"))),
            })
            .collect()
    }
}

impl Model for TrafficModel {
    type State = TrafficState;

    fn step(&self, ctx: &mut StepContext<'_>, state: &TrafficState, inbox: &[EventMessage]) -> Result<TrafficState> {
        match state {
            TrafficState::Link(l) => Ok(TrafficState::Link(self.step_link(ctx, l, inbox)?)),
            TrafficState::Region(r) => Ok(TrafficState::Region(Box::new(step_region(&self.net, ctx, r, inbox)?))),
        }
    }

    fn tally(&self, state: &TrafficState) -> Tally {
        match state {
            TrafficState::Link(l) => Tally {
                population: u64::from(l.count() + l.sent_last),
                quantity: l.emitted_g,
            },
            TrafficState::Region(r) => Tally {
                population: r.population() + u64::from(r.sent_last),
                quantity: r.emissions.grams,
            },
        }
    }

    fn observe(&self, _id: EntityId, state: &TrafficState) -> Option<f64> {
        state.as_link().map(|l| f64::from(l.count()))
    }

    fn refine(
        &self,
        session: &RefinementSession,
        region: &[(EntityId, &TrafficState)],
    ) -> Result<SimulatedEntity<TrafficState>> {
        if session.ratio != self.net.ratio {
            return Err(SimError::Refinement(format!(
                "session {} uses ratio {} but the traffic model runs {} fine steps per coarse step",
                session.id, session.ratio, self.net.ratio
            )));
        }
        let links = self.region_links(region)?;
        let r = refine_region(&self.net, session, &links)?;
        Ok(SimulatedEntity::new(session.entity, KIND_REGION, TrafficState::Region(Box::new(r))).at_level(LevelId::FINE))
    }

    fn coarsen(
        &self,
        session: &RefinementSession,
        fine: &TrafficState,
        region: &[(EntityId, &TrafficState)],
    ) -> Result<(Vec<(EntityId, TrafficState)>, SessionAudit)> {
        let TrafficState::Region(r) = fine else {
            return Err(SimError::Protocol(format!("session {} fine entity is not a region", session.id)));
        };
        let links = self.region_links(region)?;
        let (updated, audit) = coarsen_region(&self.net, session, r, &links)?;
        Ok((updated.into_iter().map(|(id, l)| (id, TrafficState::Link(l))).collect(), audit))
    }
}
