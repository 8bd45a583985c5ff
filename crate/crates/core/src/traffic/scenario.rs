//! Assembles a runnable traffic experiment: network, initial population,
//! level registration and refinement triggers.

use num_rational::Ratio;

use super::centrality::{betweenness, top_k_critical};
use super::generators::{grid, ring};
use super::graph::RoadGraph;
use super::model::{TrafficModel, TrafficState};
use super::network::{DemandTable, Network, TrafficParams};
use crate::error::{Result, SimError};
use crate::kernel::{init_simulation, EntityId, KernelConfig, SimulationState};
use crate::multilevel::{step_seconds, Coordinator, LevelSpec, StepSize, TriggerMode, TriggerPolicy, WatchRegion};

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledSession {
    pub region: Vec<EntityId>,
    pub s0: u64,
    pub s1: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoTrigger {
    pub density_threshold: f64,
    /// Watch the arcs around the `top_k` highest-betweenness nodes.
    pub top_k: usize,
    pub min_session_len: u64,
}

#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub graph: RoadGraph,
    pub params: TrafficParams,
    pub demand: DemandTable,
    pub vehicles: u64,
    pub coarse_step: StepSize,
    /// `None` runs level 0 only.
    pub fine_step: Option<StepSize>,
    pub sessions: Vec<ScheduledSession>,
    pub auto: Option<AutoTrigger>,
}

pub struct Scenario {
    pub model: TrafficModel,
    pub state: SimulationState<TrafficState>,
    pub coordinator: Option<Coordinator>,
}

impl ScenarioSpec {
    pub fn new(seed: u64, graph: RoadGraph, vehicles: u64) -> Self {
        ScenarioSpec {
            seed,
            graph,
            params: TrafficParams::default(),
            demand: DemandTable::default(),
            vehicles,
            coarse_step: Ratio::from_integer(3),
            fine_step: Some(Ratio::from_integer(1)),
            sessions: Vec::new(),
            auto: None,
        }
    }

    /// Link entities on the arcs touching `node_index`.
    pub fn region_around(&self, node_index: u32) -> Vec<EntityId> {
        self.graph.incident_arcs(node_index).into_iter().map(|a| EntityId(u64::from(a))).collect()
    }

    pub fn build(&self) -> Result<Scenario> {
        let mut params = self.params.clone();
        params.coarse_dt_s = step_seconds(self.coarse_step);
        params.fine_dt_s = match self.fine_step {
            Some(f) => step_seconds(f),
            None => params.coarse_dt_s,
        };
        let net = Network::new(self.graph.clone(), params, self.demand.clone())?;
        let model = TrafficModel::new(net);
        let state = init_simulation(&KernelConfig { seed: self.seed }, model.initial_entities(self.vehicles, self.seed)?)?;

        let coordinator = match self.fine_step {
            None => {
                if !self.sessions.is_empty() || self.auto.is_some() {
                    return Err(SimError::Config("refinement needs a fine level".into()));
                }
                None
            }
            Some(fine) => {
                let policy = match &self.auto {
                    None => TriggerPolicy::Manual,
                    Some(a) => {
                        let scores = betweenness(&self.graph);
                        let watch = top_k_critical(&scores, a.top_k)
                            .into_iter()
                            .filter_map(|node_id| self.graph.node_index(node_id))
                            .map(|n| WatchRegion {
                                region: self.region_around(n),
                            })
                            .filter(|w| !w.region.is_empty())
                            .collect();
                        TriggerPolicy::Automatic {
                            density_threshold: a.density_threshold,
                            watch,
                            min_session_len: a.min_session_len,
                        }
                    }
                };
                let mut c = Coordinator::new(policy);
                c.register_level(LevelSpec::stepped(0, self.coarse_step))?;
                c.register_level(LevelSpec::stepped(1, fine))?;
                for s in &self.sessions {
                    if let Some(bad) = s.region.iter().find(|id| id.0 as usize >= self.graph.arc_count()) {
                        return Err(SimError::Config(format!("session region names unknown arc {}", bad.0)));
                    }
                    c.trigger_refinement(s.region.clone(), s.s0, s.s1, TriggerMode::Manual, 0)?;
                }
                Some(c)
            }
        };
        Ok(Scenario {
            model,
            state,
            coordinator,
        })
    }
}

/// Ring road with `vehicles` cars and one scheduled session over a third of it.
pub fn ring_demo(seed: u64, vehicles: u64) -> ScenarioSpec {
    let g = ring(12, 150.0, 2);
    let mut spec = ScenarioSpec::new(seed, g, vehicles);
    spec.sessions.push(ScheduledSession {
        region: (0..4).map(EntityId).collect(),
        s0: 10,
        s1: 40,
    });
    spec
}

/// 8x8 two-way grid with 1,000 vehicles and one session on the arcs around
/// the most central intersection from step 50 to 120.
pub fn grid_demo(seed: u64) -> ScenarioSpec {
    let g = grid(8, 8, 150.0, 2);
    let mut spec = ScenarioSpec::new(seed, g, 1000);
    let scores = betweenness(&spec.graph);
    let hub = top_k_critical(&scores, 1)[0];
    let node = spec.graph.node_index(hub).expect("hub exists");
    spec.sessions.push(ScheduledSession {
        region: spec.region_around(node),
        s0: 50,
        s1: 120,
    });
    spec
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_demo_builds() {
        let sc = grid_demo(1).build().unwrap();
        assert_eq!(sc.state.len(), 224);
        let c = sc.coordinator.unwrap();
        assert_eq!(c.queued_sessions().len(), 1);
        assert_eq!(c.queued_sessions()[0].region.len(), 8);
    }

    #[test]
    fn coarse_only_rejects_sessions() {
        let mut spec = ring_demo(1, 10);
        spec.fine_step = None;
        assert!(spec.build().is_err());
    }
}
