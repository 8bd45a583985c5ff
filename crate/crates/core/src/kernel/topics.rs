use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::entity::{EntityId, RegionId};

/// Region membership: which entities receive a region's publications.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topics {
    members: BTreeMap<RegionId, BTreeSet<EntityId>>,
}

impl Topics {
    pub fn new() -> Self {
        Topics::default()
    }

    pub fn add_region(&mut self, region: RegionId, members: impl IntoIterator<Item = EntityId>) {
        self.members.entry(region).or_default().extend(members);
    }

    pub fn members(&self, region: RegionId) -> Option<&BTreeSet<EntityId>> {
        self.members.get(&region)
    }

    pub fn contains(&self, region: RegionId) -> bool {
        self.members.contains_key(&region)
    }

    pub fn regions(&self) -> impl Iterator<Item = (&RegionId, &BTreeSet<EntityId>)> {
        self.members.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}
