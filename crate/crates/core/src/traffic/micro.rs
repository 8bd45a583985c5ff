//! Nagel-Schreckenberg cellular automaton over a set of lanes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::kernel::{EntityId, RandomStream};

/// What a vehicle at the end of its lane does next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hop {
    /// Not decided yet; the resolver is asked before the vehicle moves.
    Unresolved,
    /// Continue onto another lane of the lattice.
    Internal(u32),
    /// Leave the lattice onto an arc simulated elsewhere.
    Exit(u32),
    /// Leave the network (destination reached, open demand).
    Sink,
    /// Wait at the lane end.
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroVehicle {
    pub id: EntityId,
    /// Identity carried across levels.
    pub tag: u64,
    pub arc: u32,
    pub cell: u32,
    /// Cells per fine step, 0..=vmax.
    pub speed: u32,
    /// Destination node index.
    pub dest: u32,
    /// Remaining node list, next node first.
    pub route: Vec<u32>,
    pub next: Hop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lane {
    pub cells: u32,
    /// Cells promised to vehicles not yet on the lattice (pending entries
    /// and outstanding offers). Internal crossings cannot use them.
    pub reserved: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub lanes: BTreeMap<u32, Lane>,
    /// Sorted by id.
    pub vehicles: Vec<MicroVehicle>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NaschParams {
    pub vmax: u32,
    pub p_brake: f64,
}

impl Default for NaschParams {
    fn default() -> Self {
        NaschParams { vmax: 5, p_brake: 0.2 }
    }
}

/// Permission to leave the lattice: `credits[(from_arc, to_arc)]` vehicles
/// may cross from `from_arc` into `to_arc`, and at most `budget[from_arc]`
/// in total.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExitCredits {
    pub credits: BTreeMap<(u32, u32), u32>,
    pub budget: BTreeMap<u32, u32>,
}

impl ExitCredits {
    fn available(&self, from: u32, to: u32) -> bool {
        self.credits.get(&(from, to)).copied().unwrap_or(0) > 0 && self.budget.get(&from).copied().unwrap_or(0) > 0
    }

    fn consume(&mut self, from: u32, to: u32) {
        if let Some(c) = self.credits.get_mut(&(from, to)) {
            *c -= 1;
        }
        if let Some(b) = self.budget.get_mut(&from) {
            *b -= 1;
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FineOutcome {
    /// Vehicles that left onto an outside arc, with that arc.
    pub exited: Vec<(MicroVehicle, u32)>,
    pub sunk: Vec<MicroVehicle>,
    /// (id, speed before, speed after) for every vehicle that moved this step.
    pub speeds: Vec<(EntityId, u32, u32)>,
}

impl Lattice {
    pub fn occupancy(&self, arc: u32) -> u32 {
        self.vehicles.iter().filter(|v| v.arc == arc).count() as u32
    }

    pub fn is_free(&self, arc: u32, cell: u32) -> bool {
        !self.vehicles.iter().any(|v| v.arc == arc && v.cell == cell)
    }

    pub fn insert(&mut self, v: MicroVehicle) {
        let at = self.vehicles.partition_point(|x| x.id < v.id);
        self.vehicles.insert(at, v);
    }

    /// Checks the one-vehicle-per-cell and bounds invariants.
    pub fn validate(&self, vmax: u32) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for v in &self.vehicles {
            let lane = self
                .lanes
                .get(&v.arc)
                .ok_or_else(|| SimError::Refinement(format!("vehicle {} on unknown lane {}", v.id, v.arc)))?;
            if v.cell >= lane.cells || v.speed > vmax || !seen.insert((v.arc, v.cell)) {
                return Err(SimError::Refinement(format!(
                    "invalid lattice: vehicle {} at arc {} cell {} speed {}",
                    v.id, v.arc, v.cell, v.speed
                )));
            }
        }
        Ok(())
    }
}

/// One parallel NaSch update.
///
/// `resolve` is called for every lane-front vehicle whose next hop is
/// still `Unresolved`. Into each internal lane at most one vehicle may cross
/// per step; when several compete, priority rotates with `fine_index`.
pub fn fine_step(
    lattice: &mut Lattice,
    params: &NaschParams,
    fine_index: u64,
    seed: u64,
    credits: &mut ExitCredits,
    resolve: &mut dyn FnMut(&mut MicroVehicle),
) -> Result<FineOutcome> {
    let vs = &mut lattice.vehicles;
    let n = vs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (vs[i].arc, vs[i].cell));

    let mut ahead: Vec<Option<u32>> = vec![None; n];
    let mut front: BTreeMap<u32, usize> = BTreeMap::new();
    let mut rear: BTreeMap<u32, u32> = BTreeMap::new();
    let mut occ: BTreeMap<u32, u32> = BTreeMap::new();
    for (k, &i) in order.iter().enumerate() {
        let v = &vs[i];
        rear.entry(v.arc).or_insert(v.cell);
        *occ.entry(v.arc).or_default() += 1;
        match order.get(k + 1).map(|&j| &vs[j]) {
            Some(next) if next.arc == v.arc => {
                if next.cell == v.cell {
                    return Err(SimError::Invariant {
                        module: "nasch",
                        step: fine_index,
                        detail: format!("vehicles {} and {} share arc {} cell {}", v.id, next.id, v.arc, v.cell),
                    });
                }
                ahead[i] = Some(next.cell);
            }
            _ => {
                front.insert(v.arc, i);
            }
        }
    }

    for &i in front.values() {
        if vs[i].next == Hop::Unresolved {
            resolve(&mut vs[i]);
        }
    }

    // free cells the lane-front vehicle may use beyond its own lane end
    let mut entry_gap: BTreeMap<usize, u32> = BTreeMap::new();
    let mut contenders: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for &i in front.values() {
        let v = &vs[i];
        let gap = match v.next {
            Hop::Internal(t) => {
                contenders.entry(t).or_default().push(i);
                continue;
            }
            Hop::Exit(t) if credits.available(v.arc, t) => params.vmax,
            Hop::Sink => params.vmax,
            _ => 0,
        };
        entry_gap.insert(i, gap);
    }
    for (t, list) in &contenders {
        let lane = lattice
            .lanes
            .get(t)
            .ok_or_else(|| SimError::Invariant {
                module: "nasch",
                step: fine_index,
                detail: format!("route leads into lane {t} which is not part of the lattice"),
            })?;
        let chosen = list[(fine_index % list.len() as u64) as usize];
        let leaving = u32::from(vs[chosen].arc == *t);
        let space = (lane.cells + leaving) as i64 - occ.get(t).copied().unwrap_or(0) as i64 - lane.reserved as i64;
        let gap = if space >= 1 {
            rear.get(t).copied().unwrap_or(lane.cells)
        } else {
            0
        };
        for &i in list {
            entry_gap.insert(i, if i == chosen { gap } else { 0 });
        }
    }

    let mut outcome = FineOutcome::default();
    let mut new_speed = vec![0u32; n];
    for i in 0..n {
        let v = &vs[i];
        let cells = lattice.lanes[&v.arc].cells;
        let gap = match ahead[i] {
            Some(c) => c - v.cell - 1,
            None => cells - 1 - v.cell + entry_gap.get(&i).copied().unwrap_or(0),
        };
        let mut s = (v.speed + 1).min(params.vmax).min(gap);
        if params.p_brake > 0.0 && s > 0 {
            let mut rng = RandomStream::new(seed, v.id, fine_index);
            if rng.chance(params.p_brake) {
                s -= 1;
            }
        }
        new_speed[i] = s;
    }

    let mut keep = Vec::with_capacity(n);
    for (i, mut v) in std::mem::take(vs).into_iter().enumerate() {
        let s = new_speed[i];
        outcome.speeds.push((v.id, v.speed, s));
        v.speed = s;
        let cells = lattice.lanes[&v.arc].cells;
        let pos = v.cell + s;
        if pos < cells {
            v.cell = pos;
            keep.push(v);
            continue;
        }
        let overflow = pos - cells;
        match v.next {
            Hop::Internal(t) => {
                v.arc = t;
                v.cell = overflow;
                if !v.route.is_empty() {
                    v.route.remove(0);
                }
                v.next = Hop::Unresolved;
                keep.push(v);
            }
            Hop::Exit(t) => {
                credits.consume(v.arc, t);
                outcome.exited.push((v, t));
            }
            Hop::Sink => outcome.sunk.push(v),
            _ => {
                return Err(SimError::Invariant {
                    module: "nasch",
                    step: fine_index,
                    detail: format!("vehicle {} overran the end of arc {}", v.id, v.arc),
                })
            }
        }
    }
    *vs = keep;

    let mut cells: Vec<(u32, u32, EntityId)> = vs.iter().map(|v| (v.arc, v.cell, v.id)).collect();
    cells.sort_unstable();
    if let Some(w) = cells.windows(2).find(|w| w[0].0 == w[1].0 && w[0].1 == w[1].1) {
        return Err(SimError::Invariant {
            module: "nasch",
            step: fine_index,
            detail: format!("cell collision on arc {} cell {} between {} and {}", w[0].0, w[0].1, w[0].2, w[1].2),
        });
    }
    Ok(outcome)
}
