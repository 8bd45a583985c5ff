use serde::{Deserialize, Serialize};

use super::macro_model::CoarseVehicle;
use crate::error::Result;

/// Payloads exchanged between traffic entities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TrafficMsg {
    /// `from_arc` lets `to_arc` discharge up to `count` vehicles into it next step.
    Offer { from_arc: u32, to_arc: u32, count: u32 },
    /// Vehicles moving from `from_arc` onto `to_arc`, in order.
    Vehicles {
        from_arc: u32,
        to_arc: u32,
        vehicles: Vec<CoarseVehicle>,
    },
}

impl TrafficMsg {
    pub fn encode(&self) -> Result<Vec<u8>> {
        Ok(bincode::serialize(self)?)
    }

    pub fn decode(bytes: &[u8]) -> Result<TrafficMsg> {
        Ok(bincode::deserialize(bytes)?)
    }
}
