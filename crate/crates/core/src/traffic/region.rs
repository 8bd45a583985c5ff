//! A refined region: the links of a session simulated cell by cell.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::emissions::EmissionAccumulator;
use super::macro_model::{split_offer, CoarseVehicle, LinkEntity};
use super::messages::TrafficMsg;
use super::micro::{fine_step, ExitCredits, Hop, Lane, Lattice, MicroVehicle};
use super::network::Network;
use super::v2v::FloodState;
use crate::error::{Result, SimError};
use crate::kernel::{EntityId, RandomStream, StepContext};
use crate::multilevel::{
    coarsen_state, refine_state, step_continuous, CoarseLink, CrossLevelBuffer, FineLink, FineSample,
    RefinementSession, SessionAudit, TransferParams,
};

/// Key offset separating destination draws from braking draws.
const DEST_STREAM: u64 = 1 << 63;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outbound {
    pub from_arc: u32,
    pub to_arc: u32,
    pub vehicle: CoarseVehicle,
}

/// Counters of a frozen link kept while its arc is refined.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LinkCounters {
    pub held: u32,
    pub injected: u64,
    pub sunk: u64,
    pub emitted_g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionEntity {
    pub session: u32,
    /// Sorted.
    pub arcs: Vec<u32>,
    pub lattice: Lattice,
    /// Vehicles that reached an arc but have not found a free entry cell.
    pub pending: BTreeMap<u32, VecDeque<MicroVehicle>>,
    /// Space offered to outside upstream arcs last step.
    pub reserved: BTreeMap<u32, u32>,
    pub counters: BTreeMap<u32, LinkCounters>,
    /// Next fresh micro id.
    pub next_id: u64,
    pub id_limit: u64,
    pub outbound: CrossLevelBuffer<Outbound>,
    pub emissions: EmissionAccumulator,
    pub flood: Option<FloodState>,
    pub fine_steps: u64,
    pub vehicles_in: u64,
    pub vehicles_out: u64,
    pub sent_last: u32,
    pub detail: Vec<FineSample>,
    /// Projection origin (lat, lon) for V2V positions.
    pub origin: (f64, f64),
}

impl RegionEntity {
    pub fn contains(&self, arc: u32) -> bool {
        self.arcs.binary_search(&arc).is_ok()
    }

    pub fn population(&self) -> u64 {
        (self.lattice.vehicles.len() + self.pending.values().map(VecDeque::len).sum::<usize>()) as u64
    }

    fn space(&self, net: &Network, arc: u32) -> u32 {
        let used = self.lattice.occupancy(arc)
            + self.pending.get(&arc).map_or(0, |p| p.len() as u32)
            + self.reserved.get(&arc).copied().unwrap_or(0);
        net.graph.arc(arc).cell_count.saturating_sub(used)
    }

    fn fresh_id(&mut self) -> Result<EntityId> {
        if self.next_id >= self.id_limit {
            return Err(SimError::Refinement(format!("session {} ran out of fresh entity ids", self.session)));
        }
        let id = EntityId(self.next_id);
        self.next_id += 1;
        Ok(id)
    }

    fn enter(&mut self, arc: u32, tag: u64, dest: u32) -> Result<()> {
        let id = self.fresh_id()?;
        self.pending.entry(arc).or_default().push_back(MicroVehicle {
            id,
            tag,
            arc,
            cell: 0,
            speed: 0,
            dest,
            route: Vec::new(),
            next: Hop::Unresolved,
        });
        self.vehicles_in += 1;
        Ok(())
    }
}

pub fn transfer_params(net: &Network) -> TransferParams {
    TransferParams {
        cell_length_m: net.params.cell_length_m,
        fine_dt_s: net.params.fine_dt_s,
        vmax: net.params.nasch.vmax,
    }
}

/// Decides where a lane-front vehicle goes next.
fn resolve(net: &Network, region: &BTreeSet<u32>, seed: u64, fine_index: u64, v: &mut MicroVehicle) {
    let node = net.graph.arc(v.arc).to;
    if v.dest == node {
        if !net.params.closed {
            v.next = Hop::Sink;
            v.route.clear();
            return;
        }
        let mut rng = RandomStream::new(seed, v.id, fine_index | DEST_STREAM);
        v.dest = net.pick_destination(node, &mut rng);
    }
    v.route = net.routing.route(&net.graph, node, v.dest);
    v.next = match net.routing.next_arc(node, v.dest) {
        Some(t) if region.contains(&t) => Hop::Internal(t),
        Some(t) => Hop::Exit(t),
        None => Hop::Sink,
    };
}

/// Refines link entities into a region entity at boundary `session.s0`.
pub fn refine_region(net: &Network, session: &RefinementSession, links: &[(EntityId, &LinkEntity)]) -> Result<RegionEntity> {
    let params = transfer_params(net);
    let mut coarse = Vec::with_capacity(links.len());
    for (_, link) in links {
        let arc = net.graph.arc(link.arc);
        coarse.push(CoarseLink {
            state: link.state(net, session.s0),
            cells: arc.cell_count,
            capacity_per_step: arc.capacity_per_step,
            fifo: link.vehicles.iter().copied().collect(),
        });
    }
    let first = session.fine_id(0);
    let refined = refine_state(&coarse, &params, first)?;
    let arcs: Vec<u32> = links.iter().map(|(_, l)| l.arc).collect();
    let mut lattice = Lattice::default();
    for FineLink { arc, cells, vehicles, .. } in refined.links {
        lattice.lanes.insert(arc, Lane { cells, reserved: 0 });
        for mut v in vehicles {
            v.route = net.routing.route(&net.graph, net.graph.arc(arc).to, v.dest);
            lattice.insert(v);
        }
    }
    lattice.validate(params.vmax)?;
    let origin = {
        let nodes: BTreeSet<u32> = arcs.iter().flat_map(|&a| [net.graph.arc(a).from, net.graph.arc(a).to]).collect();
        let n = nodes.len().max(1) as f64;
        let lat = nodes.iter().map(|&i| net.graph.nodes[i as usize].lat).sum::<f64>() / n;
        let lon = nodes.iter().map(|&i| net.graph.nodes[i as usize].lon).sum::<f64>() / n;
        (lat, lon)
    };
    let vehicles_in = lattice.vehicles.len() as u64;
    Ok(RegionEntity {
        session: session.id.0,
        reserved: links.iter().map(|(_, l)| (l.arc, l.offered_prev)).collect(),
        counters: links
            .iter()
            .map(|(_, l)| {
                (
                    l.arc,
                    LinkCounters {
                        held: l.held,
                        injected: l.injected,
                        sunk: l.sunk,
                        emitted_g: l.emitted_g,
                    },
                )
            })
            .collect(),
        arcs,
        lattice,
        pending: BTreeMap::new(),
        next_id: first.0 + refined.ids_used,
        id_limit: session.entity.0 + crate::multilevel::FINE_IDS_PER_SESSION,
        outbound: CrossLevelBuffer::new(session.ratio),
        emissions: EmissionAccumulator::default(),
        flood: None,
        fine_steps: 0,
        vehicles_in,
        vehicles_out: 0,
        sent_last: 0,
        detail: Vec::new(),
        origin,
    })
}

/// One coarse step of a region: inbound exchange, `ratio` fine steps,
/// outbound exchange and new offers.
pub fn step_region(
    net: &Network,
    ctx: &mut StepContext<'_>,
    state: &RegionEntity,
    inbox: &[crate::kernel::EventMessage],
) -> Result<RegionEntity> {
    let s = ctx.step();
    let seed = ctx.seed();
    let ratio = net.ratio;
    let mut r = state.clone();
    let region: BTreeSet<u32> = r.arcs.iter().copied().collect();

    let mut credits = ExitCredits::default();
    for msg in inbox {
        match TrafficMsg::decode(&msg.payload)? {
            TrafficMsg::Offer { from_arc, to_arc, count } => {
                if r.contains(to_arc) && !r.contains(from_arc) {
                    *credits.credits.entry((to_arc, from_arc)).or_default() += count;
                }
            }
            TrafficMsg::Vehicles { to_arc, vehicles, .. } => {
                if !r.contains(to_arc) {
                    return Err(SimError::Model {
                        step: s,
                        entity: ctx.id(),
                        detail: format!("vehicles for arc {to_arc} delivered to region {}", r.session),
                    });
                }
                for v in vehicles {
                    r.enter(to_arc, v.tag, v.dest)?;
                }
            }
        }
    }
    for &x in &r.arcs {
        if net.graph.downstream(x).iter().any(|d| !region.contains(d)) {
            credits.budget.insert(x, net.graph.arc(x).capacity_per_step);
        }
    }

    let mut rng = ctx.stream_for(ctx.id(), s | DEST_STREAM);
    for x in r.arcs.clone() {
        let demand = net.demand.at(x, s);
        let mut waiting = r.counters.get(&x).map_or(0, |c| c.held) + demand;
        while waiting > 0 && r.space(net, x) > 0 {
            let dest = net.pick_destination(net.graph.arc(x).to, &mut rng);
            let c = r.counters.entry(x).or_default();
            let tag = (1u64 << 61) | (u64::from(x) << 32) | (c.injected & 0xffff_ffff);
            c.injected += 1;
            r.enter(x, tag, dest)?;
            waiting -= 1;
        }
        r.counters.entry(x).or_default().held = waiting;
    }

    let fine_dt = net.params.fine_dt_s;
    let to_mps = net.params.cell_length_m / fine_dt;
    for f in 0..ratio {
        let fi = s * ratio + f;
        for &x in &r.arcs {
            let reserved = r.pending.get(&x).map_or(0, |p| p.len() as u32) + r.reserved.get(&x).copied().unwrap_or(0);
            if let Some(lane) = r.lattice.lanes.get_mut(&x) {
                lane.reserved = reserved;
            }
        }
        let outcome = fine_step(&mut r.lattice, &net.params.nasch, fi, seed, &mut credits, &mut |v| {
            resolve(net, &region, seed, fi, v)
        })?;
        for (v, to) in outcome.exited {
            r.outbound.push(
                Outbound {
                    from_arc: v.arc,
                    to_arc: to,
                    vehicle: CoarseVehicle {
                        tag: v.tag,
                        entered: s + 1,
                        dest: v.dest,
                    },
                },
                fi,
            );
            r.vehicles_out += 1;
        }
        for v in outcome.sunk {
            r.counters.entry(v.arc).or_default().sunk += 1;
            r.vehicles_out += 1;
        }
        for &x in &r.arcs {
            let free = r.lattice.is_free(x, 0);
            if let (true, Some(queue)) = (free, r.pending.get_mut(&x)) {
                if let Some(v) = queue.pop_front() {
                    r.lattice.insert(v);
                }
            }
        }
        r.pending.retain(|_, q| !q.is_empty());
        r.emissions = step_continuous(
            r.emissions,
            outcome.speeds.iter().map(|&(_, a, b)| (a as f64 * to_mps, b as f64 * to_mps)),
            fine_dt,
            &net.params.emissions,
        );
        if let Some(range) = net.params.v2v_range_m {
            if r.flood.is_none() {
                if let Some(first) = r.lattice.vehicles.first() {
                    r.flood = Some(FloodState::start(first.id, fi));
                }
            }
            if let Some(flood) = r.flood.as_mut() {
                let ids: Vec<EntityId> = r.lattice.vehicles.iter().map(|v| v.id).collect();
                let positions: Vec<(f64, f64)> = r
                    .lattice
                    .vehicles
                    .iter()
                    .map(|v| {
                        let cells = r.lattice.lanes[&v.arc].cells as f64;
                        net.graph.arc_point_m(v.arc, (v.cell as f64 + 0.5) / cells, r.origin)
                    })
                    .collect();
                flood.advance(&ids, &positions, range, fi);
            }
        }
        r.fine_steps += 1;
        let n = r.lattice.vehicles.len();
        let mean_speed_mps = if n == 0 {
            0.0
        } else {
            r.lattice.vehicles.iter().map(|v| v.speed as f64).sum::<f64>() / n as f64 * to_mps
        };
        r.detail.push(FineSample {
            fine_step: fi,
            population: r.population(),
            mean_speed_mps,
            emissions_g: r.emissions.grams,
            informed: r.flood.as_ref().map_or(0, |f| f.informed.len() as u64),
        });
    }

    let due = r.outbound.exchange_at_boundary(s + 1)?;
    r.sent_last = due.len() as u32;
    let mut grouped: BTreeMap<(u32, u32), Vec<CoarseVehicle>> = BTreeMap::new();
    for o in due {
        grouped.entry((o.from_arc, o.to_arc)).or_default().push(o.vehicle);
    }
    for ((from_arc, to_arc), vehicles) in grouped {
        ctx.send(EntityId(u64::from(to_arc)), TrafficMsg::Vehicles { from_arc, to_arc, vehicles }.encode()?);
    }

    for x in r.arcs.clone() {
        let outside: Vec<u32> = net.graph.upstream(x).iter().copied().filter(|u| !region.contains(u)).collect();
        let free = r.space(net, x);
        let offers = split_offer(free, &outside, s);
        for &(u, count) in &offers {
            ctx.send(EntityId(u64::from(u)), TrafficMsg::Offer { from_arc: x, to_arc: u, count }.encode()?);
        }
        r.reserved.insert(x, offers.iter().map(|o| o.1).sum());
    }
    Ok(r)
}

/// Coarsens a region back into its link entities at boundary `session.s1`.
pub fn coarsen_region(
    net: &Network,
    session: &RefinementSession,
    fine: &RegionEntity,
    links: &[(EntityId, &LinkEntity)],
) -> Result<(Vec<(EntityId, LinkEntity)>, SessionAudit)> {
    let params = transfer_params(net);
    let mut lanes: BTreeMap<u32, FineLink> = fine
        .lattice
        .lanes
        .iter()
        .map(|(&arc, lane)| {
            (
                arc,
                FineLink {
                    arc,
                    cells: lane.cells,
                    capacity_per_step: net.graph.arc(arc).capacity_per_step,
                    vehicles: Vec::new(),
                },
            )
        })
        .collect();
    for v in &fine.lattice.vehicles {
        lanes.get_mut(&v.arc).expect("lane exists").vehicles.push(v.clone());
    }
    let fine_links: Vec<FineLink> = lanes.into_values().collect();
    let coarse = coarsen_state(&fine_links, &params, fine.fine_steps, session.expected_fine_steps())?;
    let by_arc: BTreeMap<u32, _> = coarse.into_iter().map(|(st, fifo)| (st.arc, (st, fifo))).collect();

    // the session's emission mass stays with the first region link
    let mut emitted = fine.emissions.grams;
    let mut returned = 0u64;
    let mut out = Vec::with_capacity(links.len());
    for (id, old) in links {
        let arc = old.arc;
        let ff = net.free_flow_steps(arc) as u64;
        let cells = net.graph.arc(arc).cell_count;
        let window = net.graph.arc(arc).capacity_per_step.min(cells);
        let mut link = LinkEntity::new(arc);
        if let Some((_, fifo)) = by_arc.get(&arc) {
            for v in fifo {
                // vehicles near the end are ready to leave; others still travel
                let traveled = if v.cell >= cells - window {
                    ff
                } else {
                    (ff * u64::from(v.cell + 1) / u64::from(cells)).min(ff)
                };
                link.vehicles.push_back(CoarseVehicle {
                    tag: v.tag,
                    entered: session.s1.saturating_sub(traveled),
                    dest: v.dest,
                });
            }
        }
        // vehicles that never found an entry cell rejoin the back of the queue
        if let Some(queue) = fine.pending.get(&arc) {
            for v in queue {
                link.vehicles.push_back(CoarseVehicle {
                    tag: v.tag,
                    entered: session.s1,
                    dest: v.dest,
                });
            }
        }
        returned += link.vehicles.len() as u64;
        let c = fine.counters.get(&arc).copied().unwrap_or_default();
        link.held = c.held;
        link.injected = c.injected;
        link.sunk = c.sunk;
        link.emitted_g = c.emitted_g + std::mem::take(&mut emitted);
        link.offered_prev = fine.reserved.get(&arc).copied().unwrap_or(0);
        if link.count() > cells {
            return Err(SimError::Invariant {
                module: "coarsen",
                step: session.s1,
                detail: format!("arc {arc} would hold {} vehicles on {cells} cells", link.count()),
            });
        }
        out.push((*id, link));
    }
    let audit = SessionAudit {
        vehicles_in: fine.vehicles_in,
        vehicles_out: fine.vehicles_out + returned,
        fine_steps: fine.fine_steps,
        off_boundary_deliveries: fine.outbound.off_boundary_deliveries(),
        detail: fine.detail.clone(),
    };
    Ok((out, audit))
}
