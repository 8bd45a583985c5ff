use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Held<T> {
    /// Fine step index at which the item becomes visible; must be a boundary.
    deliver_fine: u64,
    item: T,
}

/// Holds cross-level traffic until the next coarse boundary.
///
/// Fine step `f` lies inside coarse step `f / ratio`; boundaries are the fine
/// indices divisible by `ratio`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossLevelBuffer<T> {
    ratio: u64,
    held: Vec<Held<T>>,
    delivered: u64,
    off_boundary: u64,
}

impl<T> CrossLevelBuffer<T> {
    pub fn new(ratio: u64) -> Self {
        assert!(ratio > 0, "ratio must be positive");
        CrossLevelBuffer {
            ratio,
            held: Vec::new(),
            delivered: 0,
            off_boundary: 0,
        }
    }

    pub fn ratio(&self) -> u64 {
        self.ratio
    }

    /// Fine index of the first boundary strictly after fine time `fine_time`.
    pub fn next_boundary(&self, fine_time: u64) -> u64 {
        (fine_time / self.ratio + 1) * self.ratio
    }

    /// Buffers an item produced during fine step `fine_time`.
    pub fn push(&mut self, item: T, fine_time: u64) {
        let deliver_fine = self.next_boundary(fine_time);
        self.held.push(Held { deliver_fine, item });
    }

    /// Buffers an item with an explicit fine delivery index. A non-boundary
    /// index is rejected later by `exchange_at_boundary`.
    pub fn push_scheduled(&mut self, item: T, deliver_fine: u64) {
        self.held.push(Held { deliver_fine, item });
    }

    pub fn len(&self) -> usize {
        self.held.len()
    }

    pub fn is_empty(&self) -> bool {
        self.held.is_empty()
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    /// Deliveries that happened at non-boundary fine steps. Stays 0.
    pub fn off_boundary_deliveries(&self) -> u64 {
        self.off_boundary
    }

    /// Releases every item due at or before coarse boundary `coarse_step`.
    pub fn exchange_at_boundary(&mut self, coarse_step: u64) -> Result<Vec<T>> {
        let now = coarse_step * self.ratio;
        if let Some(bad) = self.held.iter().find(|h| h.deliver_fine <= now && h.deliver_fine % self.ratio != 0) {
            return Err(SimError::Protocol(format!(
                "buffered cross-level item scheduled for fine step {}, which is not a boundary (ratio {})",
                bad.deliver_fine, self.ratio
            )));
        }
        let (due, later): (Vec<_>, Vec<_>) = std::mem::take(&mut self.held).into_iter().partition(|h| h.deliver_fine <= now);
        self.held = later;
        self.delivered += due.len() as u64;
        Ok(due.into_iter().map(|h| h.item).collect())
    }
}
