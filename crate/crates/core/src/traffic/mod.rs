//! Road traffic on top of the engine: graph import and centrality,
//! point-queue links at level 0, a Nagel-Schreckenberg lattice at level 1,
//! plus emissions and V2V observers that ride on the fine steps.

pub mod centrality;
pub mod emissions;
pub mod generators;
pub mod graph;
pub mod macro_model;
pub mod messages;
pub mod micro;
pub mod model;
pub mod network;
pub mod region;
pub mod routing;
pub mod scenario;
pub mod v2v;

pub use centrality::{betweenness, betweenness_exact, brandes, top_k_critical, BetweennessScores};
pub use emissions::{accumulate, emission_rate, EmissionAccumulator, EmissionCoeffs};
pub use graph::{load_graph, Arc, EdgeSpec, GraphFormat, Node, RoadGraph, CELL_LENGTH_M};
pub use macro_model::{split_offer, CoarseVehicle, LinkEntity, LinkState};
pub use messages::TrafficMsg;
pub use micro::{fine_step, ExitCredits, Hop, Lane, Lattice, MicroVehicle, NaschParams};
pub use model::{TrafficModel, TrafficState, KIND_LINK, KIND_REGION};
pub use network::{DemandEntry, DemandTable, Network, TrafficParams};
pub use region::RegionEntity;
pub use routing::RoutingTable;
pub use v2v::{wireless_neighbors, FloodState};
pub use scenario::{grid_demo, ring_demo, AutoTrigger, Scenario, ScenarioSpec, ScheduledSession};
