//! Level registration, refinement sessions and the coarse/fine state transfer.
//!
//! A session freezes a set of level-0 entities at boundary `s0`, replaces them
//! by one fine-level entity that runs `ratio` fine steps per coarse step, and
//! folds the result back at `s1`. Messages addressed to frozen entities are
//! redirected to the fine entity, and everything it emits is buffered to the
//! next coarse boundary, so cross-level interaction only ever happens at
//! instants where both clocks agree.

mod apply;
mod buffer;
mod continuous;
mod coordinator;
mod level;
mod session;
mod transfer;

pub use apply::{end_session, start_session};
pub use buffer::CrossLevelBuffer;
pub use continuous::step_continuous;
pub use coordinator::{BoundaryPlan, Coordinator};
pub use level::{alignment_ratio, parse_step_size, step_seconds, LevelHandle, LevelKind, LevelSpec, StepSize};
pub use session::{
    FineSample, RefinementSession, SessionAudit, SessionId, TriggerMode, TriggerPolicy, WatchRegion, FINE_IDS_PER_SESSION,
    FINE_ID_BASE,
};
pub use transfer::{coarsen_state, CoarseLink, place_vehicles, quantize_speed, refine_state, FineLink, RefinedRegion, TransferParams};
