use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::emissions::EmissionCoeffs;
use super::graph::RoadGraph;
use super::micro::NaschParams;
use super::routing::RoutingTable;
use crate::error::{Result, SimError};
use crate::kernel::RandomStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficParams {
    pub coarse_dt_s: f64,
    pub fine_dt_s: f64,
    pub cell_length_m: f64,
    pub nasch: NaschParams,
    pub speed_limit_mps: f64,
    /// Closed networks recycle arriving vehicles with a new destination;
    /// open ones remove them.
    pub closed: bool,
    pub emissions: EmissionCoeffs,
    /// V2V radio range; `None` disables the hazard flood.
    pub v2v_range_m: Option<f64>,
}

impl Default for TrafficParams {
    fn default() -> Self {
        TrafficParams {
            coarse_dt_s: 3.0,
            fine_dt_s: 1.0,
            cell_length_m: super::graph::CELL_LENGTH_M,
            nasch: NaschParams::default(),
            speed_limit_mps: 13.89,
            closed: true,
            emissions: EmissionCoeffs::default(),
            v2v_range_m: Some(250.0),
        }
    }
}

impl TrafficParams {
    /// Fine steps per coarse step.
    pub fn ratio(&self) -> Result<u64> {
        let r = self.coarse_dt_s / self.fine_dt_s;
        let rounded = r.round();
        if !(rounded >= 1.0) || (r - rounded).abs() > 1e-9 * r {
            return Err(SimError::Config(format!(
                "coarse step {} s is not an integer multiple of fine step {} s",
                self.coarse_dt_s, self.fine_dt_s
            )));
        }
        Ok(rounded as u64)
    }

    pub fn vmax_mps(&self) -> f64 {
        self.nasch.vmax as f64 * self.cell_length_m / self.fine_dt_s
    }
}

/// Injection of `per_step` vehicles onto `arc` for steps in `[from_step, to_step)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemandEntry {
    pub arc: u32,
    pub from_step: u64,
    pub to_step: u64,
    pub per_step: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DemandTable {
    by_arc: BTreeMap<u32, Vec<DemandEntry>>,
}

impl DemandTable {
    pub fn new(entries: impl IntoIterator<Item = DemandEntry>) -> Self {
        let mut by_arc: BTreeMap<u32, Vec<DemandEntry>> = BTreeMap::new();
        for e in entries {
            by_arc.entry(e.arc).or_default().push(e);
        }
        DemandTable { by_arc }
    }

    pub fn at(&self, arc: u32, step: u64) -> u32 {
        self.by_arc
            .get(&arc)
            .map(|es| es.iter().filter(|e| (e.from_step..e.to_step).contains(&step)).map(|e| e.per_step).sum())
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.by_arc.is_empty()
    }
}

/// Immutable data shared by all traffic entities.
#[derive(Debug, Clone)]
pub struct Network {
    pub graph: RoadGraph,
    pub routing: RoutingTable,
    pub params: TrafficParams,
    pub demand: DemandTable,
    pub ratio: u64,
    free_flow: Vec<u32>,
}

impl Network {
    pub fn new(graph: RoadGraph, params: TrafficParams, demand: DemandTable) -> Result<Network> {
        let ratio = params.ratio()?;
        params.emissions.validate(params.vmax_mps())?;
        if !(0.0..=1.0).contains(&params.nasch.p_brake) {
            return Err(SimError::Config(format!("p_brake must lie in [0, 1], got {}", params.nasch.p_brake)));
        }
        if params.nasch.vmax == 0 {
            return Err(SimError::Config("vmax must be at least 1".into()));
        }
        for arc in demand.by_arc.keys() {
            if *arc as usize >= graph.arc_count() {
                return Err(SimError::Config(format!("demand references arc {arc}, graph has {}", graph.arc_count())));
            }
        }
        let step_m = params.speed_limit_mps * params.coarse_dt_s;
        let free_flow = graph.arcs.iter().map(|a| ((a.length_m / step_m).ceil() as u32).max(1)).collect();
        let routing = RoutingTable::build(&graph);
        Ok(Network {
            graph,
            routing,
            params,
            demand,
            ratio,
            free_flow,
        })
    }

    pub fn free_flow_steps(&self, arc: u32) -> u32 {
        self.free_flow[arc as usize]
    }

    pub fn free_speed_mps(&self, arc: u32) -> f64 {
        self.graph.arc(arc).length_m / (self.free_flow_steps(arc) as f64 * self.params.coarse_dt_s)
    }

    /// A reachable node other than `from`, drawn from `rng`.
    pub fn pick_destination(&self, from: u32, rng: &mut RandomStream) -> u32 {
        let n = self.graph.node_count() as u64;
        if n <= 1 {
            return from;
        }
        for _ in 0..32 {
            let d = rng.below(n) as u32;
            if d != from && self.routing.reachable(from, d) {
                return d;
            }
        }
        (1..n)
            .map(|k| ((from as u64 + k) % n) as u32)
            .find(|&d| self.routing.reachable(from, d))
            .unwrap_or(from)
    }
}
