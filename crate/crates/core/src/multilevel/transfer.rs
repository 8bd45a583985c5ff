//! Coarse link state to cell lattice and back.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::kernel::EntityId;
use crate::traffic::{CoarseVehicle, Hop, LinkState, MicroVehicle};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferParams {
    pub cell_length_m: f64,
    pub fine_dt_s: f64,
    pub vmax: u32,
}

/// A link at the fine level: its lattice lane and the vehicles on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineLink {
    pub arc: u32,
    pub cells: u32,
    pub capacity_per_step: u32,
    pub vehicles: Vec<MicroVehicle>,
}

/// A link at the coarse level: aggregate state plus FIFO, front first.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseLink {
    pub state: LinkState,
    pub cells: u32,
    pub capacity_per_step: u32,
    pub fifo: Vec<CoarseVehicle>,
}

/// Lattices built by [`refine_state`].
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedRegion {
    pub links: Vec<FineLink>,
    /// Number of fresh ids consumed.
    pub ids_used: u64,
}

/// Occupied cells for `n` vehicles on `cells` cells: floor(i·L/n).
pub fn place_vehicles(n: u32, cells: u32) -> Result<Vec<u32>> {
    if n > cells {
        return Err(SimError::Refinement(format!("{n} vehicles do not fit on {cells} cells")));
    }
    Ok((0..n as u64).map(|i| (i * cells as u64 / n as u64) as u32).collect())
}

/// Mean speed in m/s to integer cells per fine step.
pub fn quantize_speed(mean_speed_mps: f64, params: &TransferParams) -> u32 {
    let cells = (mean_speed_mps * params.fine_dt_s / params.cell_length_m).round();
    cells.clamp(0.0, params.vmax as f64) as u32
}

/// Builds lattices for the given links. Micro ids are `first_id`,
/// `first_id + 1`, ... in link order then FIFO order; the FIFO front takes
/// the most advanced cell. Routes are left for the caller to fill.
pub fn refine_state(
    links: &[CoarseLink],
    params: &TransferParams,
    first_id: EntityId,
) -> Result<RefinedRegion> {
    let mut next = first_id.0;
    let mut out = Vec::with_capacity(links.len());
    for CoarseLink {
        state,
        cells,
        capacity_per_step: capacity,
        fifo,
    } in links
    {
        if fifo.len() as u32 != state.count {
            return Err(SimError::Refinement(format!(
                "arc {} reports {} vehicles but carries {}",
                state.arc,
                state.count,
                fifo.len()
            )));
        }
        let slots = place_vehicles(state.count, *cells).map_err(|e| {
            SimError::Refinement(format!("arc {} (edge {}): {}", state.arc, state.edge_id, e))
        })?;
        let speed = quantize_speed(state.mean_speed_mps, params);
        let vehicles = fifo
            .iter()
            .zip(slots.iter().rev())
            .map(|(v, &cell)| {
                let id = EntityId(next);
                next += 1;
                MicroVehicle {
                    id,
                    tag: v.tag,
                    arc: state.arc,
                    cell,
                    speed,
                    dest: v.dest,
                    route: Vec::new(),
                    next: Hop::Unresolved,
                }
            })
            .collect();
        out.push(FineLink {
            arc: state.arc,
            cells: *cells,
            capacity_per_step: *capacity,
            vehicles,
        });
    }
    Ok(RefinedRegion {
        links: out,
        ids_used: next - first_id.0,
    })
}

/// Aggregates lattices back to link states, FIFO front first.
///
/// `queued` counts vehicles in the last `capacity_per_step` cells.
pub fn coarsen_state(
    links: &[FineLink],
    params: &TransferParams,
    fine_steps: u64,
    expected_fine_steps: u64,
) -> Result<Vec<(LinkState, Vec<MicroVehicle>)>> {
    if fine_steps != expected_fine_steps {
        return Err(SimError::Protocol(format!(
            "fine clock misaligned: {fine_steps} fine steps executed, {expected_fine_steps} expected"
        )));
    }
    Ok(links
        .iter()
        .map(|l| {
            let mut fifo = l.vehicles.clone();
            fifo.sort_by(|a, b| b.cell.cmp(&a.cell).then(a.id.cmp(&b.id)));
            let count = fifo.len() as u32;
            let window = l.capacity_per_step.min(l.cells);
            let queued = fifo.iter().filter(|v| v.cell >= l.cells - window).count() as u32;
            let mean_speed_mps = if count == 0 {
                0.0
            } else {
                fifo.iter().map(|v| v.speed as f64).sum::<f64>() / count as f64 * params.cell_length_m / params.fine_dt_s
            };
            (
                LinkState {
                    edge_id: 0,
                    arc: l.arc,
                    count,
                    queued,
                    mean_speed_mps,
                    free_flow_steps: 0,
                },
                fifo,
            )
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: TransferParams = TransferParams {
        cell_length_m: 7.5,
        fine_dt_s: 1.0,
        vmax: 5,
    };

    #[test]
    fn placement_rule() {
        assert_eq!(place_vehicles(3, 10).unwrap(), vec![0, 3, 6]);
        assert!(place_vehicles(0, 10).unwrap().is_empty());
        assert_eq!(place_vehicles(10, 10).unwrap(), (0..10).collect::<Vec<_>>());
        assert!(place_vehicles(11, 10).is_err());
    }

    #[test]
    fn speed_quantization() {
        assert_eq!(quantize_speed(0.0, &P), 0);
        assert_eq!(quantize_speed(13.89, &P), 2);
        assert_eq!(quantize_speed(100.0, &P), 5);
    }

    #[test]
    fn over_capacity_link_is_rejected() {
        let state = LinkState {
            edge_id: 4,
            arc: 1,
            count: 3,
            queued: 0,
            mean_speed_mps: 0.0,
            free_flow_steps: 1,
        };
        let fifo = vec![CoarseVehicle { tag: 0, entered: 0, dest: 0 }; 3];
        let link = CoarseLink {
            state,
            cells: 2,
            capacity_per_step: 1,
            fifo,
        };
        let e = refine_state(&[link], &P, EntityId(100)).unwrap_err();
        assert!(e.to_string().contains("arc 1"), "{e}");
    }

    #[test]
    fn all_at_vmax() {
        let link = FineLink {
            arc: 0,
            cells: 10,
            capacity_per_step: 2,
            vehicles: (0..3)
                .map(|k| MicroVehicle {
                    id: EntityId(k),
                    tag: k,
                    arc: 0,
                    cell: k as u32 * 3,
                    speed: 5,
                    dest: 0,
                    route: vec![],
                    next: Hop::Unresolved,
                })
                .collect(),
        };
        let out = coarsen_state(&[link], &P, 6, 6).unwrap();
        assert_eq!(out[0].0.mean_speed_mps, 5.0 * 7.5);
        assert_eq!(out[0].0.queued, 0);
        assert_eq!(out[0].1[0].cell, 6);
        assert!(coarsen_state(&[], &P, 5, 6).is_err());
    }
}
