//! Point-queue link dynamics for the coarse level.
//!
//! Every arc is one entity. A link offers its free space to upstream arcs
//! one step ahead; an upstream link may only discharge as many vehicles into
//! it as it was offered, so the jam bound holds without shared state.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::network::Network;
use crate::kernel::RandomStream;

/// A vehicle as the coarse level sees it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoarseVehicle {
    pub tag: u64,
    /// Coarse step at which it entered the current link.
    pub entered: u64,
    /// Destination node index.
    pub dest: u32,
}

/// Aggregate view of one link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    pub edge_id: u64,
    pub arc: u32,
    pub count: u32,
    /// Vehicles past their free-flow time, waiting to discharge.
    pub queued: u32,
    pub mean_speed_mps: f64,
    pub free_flow_steps: u32,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinkEntity {
    pub arc: u32,
    /// FIFO, front first.
    pub vehicles: VecDeque<CoarseVehicle>,
    /// Space promised to upstream arcs in the previous step.
    pub offered_prev: u32,
    /// Vehicles handed to downstream arcs in the previous step (in flight).
    pub sent_last: u32,
    /// Injections waiting for space.
    pub held: u32,
    pub injected: u64,
    pub sunk: u64,
    /// Emission mass produced on this arc while it was refined.
    pub emitted_g: f64,
}

/// Messages produced by one link step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinkOutputs {
    /// Downstream arc → vehicles, in discharge order.
    pub discharged: BTreeMap<u32, Vec<CoarseVehicle>>,
    /// (upstream arc, cells offered).
    pub offers: Vec<(u32, u32)>,
}

/// Tag space for injected vehicles, disjoint from the initial population.
const INJECTED_TAG: u64 = 1 << 62;

/// Splits `free` cells evenly over `upstream`, giving the remainder to a
/// window that rotates with `step`.
pub fn split_offer(free: u32, upstream: &[u32], step: u64) -> Vec<(u32, u32)> {
    let k = upstream.len() as u32;
    if k == 0 || free == 0 {
        return Vec::new();
    }
    let base = free / k;
    let rem = free % k;
    let start = (step % k as u64) as u32;
    upstream
        .iter()
        .enumerate()
        .map(|(i, &u)| {
            let pos = (i as u32 + k - start) % k;
            (u, base + u32::from(pos < rem))
        })
        .filter(|&(_, c)| c > 0)
        .collect()
}

impl LinkEntity {
    pub fn new(arc: u32) -> Self {
        LinkEntity {
            arc,
            ..Default::default()
        }
    }

    pub fn count(&self) -> u32 {
        self.vehicles.len() as u32
    }

    pub fn state(&self, net: &Network, step: u64) -> LinkState {
        let arc = net.graph.arc(self.arc);
        let ff = net.free_flow_steps(self.arc);
        let count = self.count();
        let queued = self.vehicles.iter().filter(|v| step.saturating_sub(v.entered) >= ff as u64).count() as u32;
        let mean_speed_mps = if count == 0 {
            0.0
        } else {
            (count - queued) as f64 / count as f64 * net.free_speed_mps(self.arc)
        };
        LinkState {
            edge_id: arc.edge_id,
            arc: self.arc,
            count,
            queued,
            mean_speed_mps,
            free_flow_steps: ff,
        }
    }

    /// One coarse step of the point queue.
    ///
    /// `arrivals` were discharged into this link by upstream arcs last step;
    /// `credits` are the cells downstream arcs offered for this step.
    pub fn coarse_step(
        &self,
        net: &Network,
        step: u64,
        arrivals: impl IntoIterator<Item = CoarseVehicle>,
        credits: &BTreeMap<u32, u32>,
        demand: u32,
        rng: &mut RandomStream,
    ) -> (LinkEntity, LinkOutputs) {
        let arc = net.graph.arc(self.arc);
        let ff = net.free_flow_steps(self.arc) as u64;
        let mut next = self.clone();
        let mut credits = credits.clone();
        let mut out = LinkOutputs::default();
        for mut v in arrivals {
            v.entered = step;
            next.vehicles.push_back(v);
        }

        let mut discharged = 0u32;
        let mut sent = 0u32;
        while discharged < arc.capacity_per_step {
            let Some(head) = next.vehicles.front_mut() else { break };
            if step.saturating_sub(head.entered) < ff {
                break;
            }
            if head.dest == arc.to {
                if net.params.closed {
                    head.dest = net.pick_destination(arc.to, rng);
                } else {
                    next.vehicles.pop_front();
                    next.sunk += 1;
                    discharged += 1;
                    continue;
                }
            }
            let Some(down) = net.routing.next_arc(arc.to, head.dest) else {
                // destination unreachable from here: leave the network
                next.vehicles.pop_front();
                next.sunk += 1;
                discharged += 1;
                continue;
            };
            match credits.get_mut(&down) {
                Some(c) if *c > 0 => {
                    *c -= 1;
                    let v = next.vehicles.pop_front().expect("head exists");
                    out.discharged.entry(down).or_default().push(v);
                    discharged += 1;
                    sent += 1;
                }
                _ => break,
            }
        }
        next.sent_last = sent;

        let mut waiting = next.held + demand;
        while waiting > 0 && next.count() + self.offered_prev < arc.cell_count {
            let dest = net.pick_destination(arc.to, rng);
            next.vehicles.push_back(CoarseVehicle {
                tag: INJECTED_TAG | (u64::from(self.arc) << 32) | (next.injected & 0xffff_ffff),
                entered: step,
                dest,
            });
            next.injected += 1;
            waiting -= 1;
        }
        next.held = waiting;

        let free = arc.cell_count.saturating_sub(next.count() + self.offered_prev);
        out.offers = split_offer(free, net.graph.upstream(self.arc), step);
        next.offered_prev = out.offers.iter().map(|o| o.1).sum();
        (next, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::EntityId;
    use crate::traffic::generators::ring;
    use crate::traffic::network::TrafficParams;

    fn queue(n: usize, dest: u32) -> LinkEntity {
        let mut l = LinkEntity::new(0);
        for tag in 0..n as u64 {
            l.vehicles.push_back(CoarseVehicle { tag, entered: 0, dest });
        }
        l
    }

    #[test]
    fn split_offer_rotates_remainder() {
        assert_eq!(split_offer(5, &[1, 2], 0), vec![(1, 3), (2, 2)]);
        assert_eq!(split_offer(5, &[1, 2], 1), vec![(1, 2), (2, 3)]);
        assert_eq!(split_offer(1, &[1, 2, 3], 2), vec![(3, 1)]);
        assert!(split_offer(0, &[1], 0).is_empty());
    }

    #[test]
    fn capacity_limits_discharge() {
        // ring of 4 arcs, capacity 2; five queued vehicles heading two nodes on
        let net = Network::new(ring(4, 75.0, 2), TrafficParams::default(), Default::default()).unwrap();
        let link = queue(5, 3);
        let credits = BTreeMap::from([(1u32, 4u32)]);
        let mut rng = RandomStream::new(1, EntityId(0), 50);
        let (next, out) = link.coarse_step(&net, 50, [], &credits, 0, &mut rng);
        assert_eq!(out.discharged[&1].len(), 2);
        assert_eq!(next.count(), 3);
        assert_eq!(next.sent_last, 2);
    }

    #[test]
    fn no_credit_no_discharge() {
        let net = Network::new(ring(4, 75.0, 2), TrafficParams::default(), Default::default()).unwrap();
        let link = queue(5, 3);
        let mut rng = RandomStream::new(1, EntityId(0), 50);
        let (next, out) = link.coarse_step(&net, 50, [], &BTreeMap::new(), 0, &mut rng);
        assert!(out.discharged.is_empty());
        assert_eq!(next.count(), 5);
    }

    #[test]
    fn empty_link_stays_empty() {
        let net = Network::new(ring(4, 75.0, 2), TrafficParams::default(), Default::default()).unwrap();
        let link = LinkEntity::new(0);
        let mut rng = RandomStream::new(1, EntityId(0), 3);
        let (next, out) = link.coarse_step(&net, 3, [], &BTreeMap::new(), 0, &mut rng);
        assert_eq!(next.count(), 0);
        assert!(out.discharged.is_empty());
        // the whole link is offered to its single upstream arc
        assert_eq!(out.offers, vec![(3, 10)]);
    }

    #[test]
    fn full_link_holds_demand() {
        let net = Network::new(ring(4, 15.0, 1), TrafficParams::default(), Default::default()).unwrap();
        let link = LinkEntity::new(0);
        let mut rng = RandomStream::new(1, EntityId(0), 0);
        let (next, _) = link.coarse_step(&net, 0, [], &BTreeMap::new(), 5, &mut rng);
        assert_eq!(next.count(), 2);
        assert_eq!(next.held, 3);
        assert_eq!(next.injected, 2);
    }
}
