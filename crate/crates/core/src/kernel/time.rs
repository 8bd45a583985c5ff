use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

/// Identifier of a simulation level. Level 0 is the coarsest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct LevelId(pub u8);

impl LevelId {
    pub const COARSE: LevelId = LevelId(0);
    pub const FINE: LevelId = LevelId(1);
    pub const CONTINUOUS: LevelId = LevelId(2);
}

impl fmt::Display for LevelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.0)
    }
}

/// A timestep index on a given level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct VirtualTime {
    pub step: u64,
    pub level: LevelId,
}

impl VirtualTime {
    pub fn new(step: u64, level: LevelId) -> Self {
        VirtualTime { step, level }
    }

    pub fn coarse(step: u64) -> Self {
        VirtualTime::new(step, LevelId::COARSE)
    }

    /// Model time in seconds, given the step size of this level.
    pub fn model_seconds(&self, step_size: Ratio<u64>) -> Ratio<u64> {
        step_size * self.step
    }

    pub fn next(&self) -> Self {
        VirtualTime::new(self.step + 1, self.level)
    }
}

impl fmt::Display for VirtualTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.step, self.level)
    }
}
