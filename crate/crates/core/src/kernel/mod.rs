//! Time-stepped core: identities, messages, random streams, traces and the
//! sequential executor every parallel configuration is checked against.

mod entity;
mod model;
mod report;
mod rng;
mod sequential;
mod time;
mod topics;
mod trace;

pub use entity::{EntityId, EventMessage, RegionId, SimulatedEntity};
pub use model::{Model, Publication, StepContext, Tally};
pub use report::{MigrationRecord, Progress, RunCounters, RunReport, SessionRecord, StepMetrics};
pub use rng::RandomStream;
pub use sequential::{advance_sequential, init_simulation, run_sequential, run_sequential_with, KernelConfig, RunOptions, SimulationState, Slot};
pub use time::{LevelId, VirtualTime};
pub use topics::Topics;
pub use trace::{entity_digest, Digest, Divergence, StepRecord, Trace, LOG_MAGIC, LOG_VERSION};
