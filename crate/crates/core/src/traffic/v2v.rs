use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::kernel::EntityId;

/// Unit-disk adjacency: i and j are connected iff their distance is at most
/// `range` (closed ball). Neighbor lists are sorted ascending.
pub fn wireless_neighbors(positions: &[(f64, f64)], range: f64) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); positions.len()];
    if !(range > 0.0) {
        return adj;
    }
    let key = |p: (f64, f64)| ((p.0 / range).floor() as i64, (p.1 / range).floor() as i64);
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, &p) in positions.iter().enumerate() {
        buckets.entry(key(p)).or_default().push(i);
    }
    let r2 = range * range;
    for (i, &p) in positions.iter().enumerate() {
        let (cx, cy) = key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(cands) = buckets.get(&(cx + dx, cy + dy)) else {
                    continue;
                };
                for &j in cands {
                    if j == i {
                        continue;
                    }
                    let q = positions[j];
                    let d2 = (p.0 - q.0).powi(2) + (p.1 - q.1).powi(2);
                    if d2 <= r2 {
                        adj[i].push(j);
                    }
                }
            }
        }
        adj[i].sort_unstable();
    }
    adj
}

/// Hazard flood over V2V links. A vehicle that learns the hazard at fine
/// step f rebroadcasts once; its neighbors learn it at f + 1.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FloodState {
    pub origin_fine_step: u64,
    /// Vehicle id → fine step at which it was informed.
    pub informed: BTreeMap<EntityId, u64>,
    /// Broadcasts due at the next fine step.
    pub pending: Vec<EntityId>,
    pub broadcasts: u64,
    pub deliveries: u64,
}

impl FloodState {
    pub fn start(origin: EntityId, fine_step: u64) -> FloodState {
        FloodState {
            origin_fine_step: fine_step,
            informed: BTreeMap::from([(origin, fine_step)]),
            pending: vec![origin],
            broadcasts: 0,
            deliveries: 0,
        }
    }

    /// One fine step: each pending sender broadcasts to its current
    /// neighbors; newly reached vehicles broadcast on the following step.
    pub fn advance(&mut self, ids: &[EntityId], positions: &[(f64, f64)], range: f64, fine_step: u64) {
        let adj = wireless_neighbors(positions, range);
        let index: BTreeMap<EntityId, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let mut next = Vec::new();
        for sender in std::mem::take(&mut self.pending) {
            let Some(&i) = index.get(&sender) else {
                continue;
            };
            self.broadcasts += 1;
            for &j in &adj[i] {
                self.deliveries += 1;
                let id = ids[j];
                if let std::collections::btree_map::Entry::Vacant(e) = self.informed.entry(id) {
                    e.insert(fine_step + 1);
                    next.push(id);
                }
            }
        }
        next.sort_unstable();
        self.pending = next;
    }

    pub fn max_latency(&self) -> u64 {
        self.informed.values().map(|f| f - self.origin_fine_step).max().unwrap_or(0)
    }
}
