use thiserror::Error;

use crate::kernel::EntityId;

pub type Result<T, E = SimError> = std::result::Result<T, E>;

/// Every failure the engine can report.
///
/// Variants carry enough context (step, entity, record id) to localize the
/// problem without re-running.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("construction error: {0}")]
    Construction(String),

    #[error("contract violation at step {step} by entity {entity}: {detail}")]
    Contract {
        step: u64,
        entity: EntityId,
        detail: String,
    },

    #[error("causality violation on LP {lp}: message for step {deliver_step} arrived after step {completed} completed")]
    Causality {
        lp: usize,
        deliver_step: u64,
        completed: u64,
    },

    #[error("routing error: destination {0} is not in the directory")]
    Routing(EntityId),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("serialization error: {0}")]
    Serialization(String),

    #[error("refinement error: {0}")]
    Refinement(String),

    #[error("parse error in {record}: {detail}")]
    Parse { record: String, detail: String },

    #[error("model error at step {step} in entity {entity}: {detail}")]
    Model {
        step: u64,
        entity: EntityId,
        detail: String,
    },

    #[error("invariant failure in {module} at step {step}: {detail}")]
    Invariant {
        module: &'static str,
        step: u64,
        detail: String,
    },

    #[error("run aborted: {0}")]
    Aborted(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<bincode::Error> for SimError {
    fn from(e: bincode::Error) -> Self {
        SimError::Serialization(e.to_string())
    }
}

impl SimError {
    pub fn parse(record: impl Into<String>, detail: impl Into<String>) -> Self {
        SimError::Parse {
            record: record.into(),
            detail: detail.into(),
        }
    }
}
