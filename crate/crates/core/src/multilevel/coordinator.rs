use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::level::{alignment_ratio, LevelHandle, LevelKind, LevelSpec};
use super::session::{
    RefinementSession, SessionId, TriggerMode, TriggerPolicy, FINE_IDS_PER_SESSION, FINE_ID_BASE,
};
use crate::error::{Result, SimError};
use crate::kernel::{EntityId, LevelId};

/// Structural changes to apply at one coarse boundary, in order: `end`, then `start`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BoundaryPlan {
    pub boundary: u64,
    pub end: Vec<RefinementSession>,
    pub start: Vec<RefinementSession>,
}

impl BoundaryPlan {
    pub fn is_empty(&self) -> bool {
        self.end.is_empty() && self.start.is_empty()
    }
}

/// Owns level registration and the session lifecycle.
///
/// The coordinator only decides; executors apply its plans at boundaries.
/// Decisions depend only on the boundary index and the observations passed
/// in, so every executor replays the same sessions.
#[derive(Debug, Clone, Default)]
pub struct Coordinator {
    levels: Vec<(LevelSpec, Option<u64>)>,
    policy: TriggerPolicy,
    queued: Vec<RefinementSession>,
    active: Vec<RefinementSession>,
    next_index: u32,
}

impl Coordinator {
    pub fn new(policy: TriggerPolicy) -> Self {
        Coordinator {
            policy,
            ..Default::default()
        }
    }

    pub fn register_level(&mut self, spec: LevelSpec) -> Result<LevelHandle> {
        if spec.id.0 as usize != self.levels.len() {
            return Err(SimError::Config(format!(
                "levels must be registered in order; expected level {}, got {}",
                self.levels.len(),
                spec.id.0
            )));
        }
        if *spec.step_size.numer() == 0 {
            return Err(SimError::Config(format!("level {} step size must be positive", spec.id.0)));
        }
        let ratio = match (self.levels.last(), spec.kind) {
            (None, _) => None,
            (Some(_), LevelKind::Continuous) => None,
            (Some((parent, _)), LevelKind::TimeStepped) => {
                if parent.kind == LevelKind::Continuous {
                    return Err(SimError::Config("a time-stepped level cannot refine a continuous one".into()));
                }
                Some(alignment_ratio(parent.step_size, spec.step_size)?)
            }
        };
        let handle = LevelHandle { level: spec.id, ratio };
        self.levels.push((spec, ratio));
        Ok(handle)
    }

    pub fn level(&self, id: LevelId) -> Option<&LevelSpec> {
        self.levels.get(id.0 as usize).map(|(s, _)| s)
    }

    /// Fine steps per coarse step between levels 0 and 1.
    pub fn refinement_ratio(&self) -> Result<u64> {
        self.levels
            .get(1)
            .and_then(|(_, r)| *r)
            .ok_or_else(|| SimError::Config("no time-stepped level 1 registered".into()))
    }

    pub fn policy(&self) -> &TriggerPolicy {
        &self.policy
    }

    pub fn active_sessions(&self) -> &[RefinementSession] {
        &self.active
    }

    pub fn queued_sessions(&self) -> &[RefinementSession] {
        &self.queued
    }

    fn conflicts(&self, region: &[EntityId], s0: u64, s1: u64) -> bool {
        self.active
            .iter()
            .chain(&self.queued)
            .any(|s| s.overlaps_time(s0, s1) && s.overlaps_region(region))
    }

    fn allocate(&mut self, region: Vec<EntityId>, s0: u64, s1: u64, trigger: TriggerMode) -> Result<RefinementSession> {
        let ratio = self.refinement_ratio()?;
        let index = self.next_index;
        self.next_index += 1;
        Ok(RefinementSession {
            id: SessionId(index),
            region,
            s0,
            s1,
            ratio,
            entity: EntityId(FINE_ID_BASE + index as u64 * FINE_IDS_PER_SESSION),
            trigger,
        })
    }

    /// Queues a session starting at boundary `s0`. `now` is the next boundary
    /// that has not yet been applied.
    pub fn trigger_refinement(
        &mut self,
        region: Vec<EntityId>,
        s0: u64,
        s1: u64,
        trigger: TriggerMode,
        now: u64,
    ) -> Result<RefinementSession> {
        let mut region = region;
        region.sort_unstable();
        region.dedup();
        if region.is_empty() {
            return Err(SimError::Config("refinement region is empty".into()));
        }
        if s0 >= s1 {
            return Err(SimError::Config(format!("session must satisfy s0 < s1, got [{s0}, {s1})")));
        }
        if s0 < now {
            return Err(SimError::Config(format!("session start {s0} is not a future boundary (now {now})")));
        }
        if region.iter().any(|id| id.0 >= FINE_ID_BASE) {
            return Err(SimError::Config("refinement region must contain level-0 entities only".into()));
        }
        if self.conflicts(&region, s0, s1) {
            return Err(SimError::Config(format!(
                "region overlaps a session already scheduled during [{s0}, {s1})"
            )));
        }
        let session = self.allocate(region, s0, s1, trigger)?;
        self.queued.push(session.clone());
        Ok(session)
    }

    /// Entities whose observations feed automatic triggers.
    pub fn watched_entities(&self) -> impl Iterator<Item = EntityId> + '_ {
        let watch: &[_] = match &self.policy {
            TriggerPolicy::Automatic { watch, .. } => watch,
            TriggerPolicy::Manual => &[],
        };
        watch.iter().flat_map(|w| w.region.iter().copied())
    }

    /// Decides what happens at boundary `boundary` (before that step runs),
    /// given observations taken at the end of the previous step.
    pub fn plan_boundary(&mut self, boundary: u64, observations: &BTreeMap<EntityId, f64>) -> Result<BoundaryPlan> {
        let mut plan = BoundaryPlan {
            boundary,
            ..Default::default()
        };
        let (ended, still): (Vec<_>, Vec<_>) = std::mem::take(&mut self.active).into_iter().partition(|s| s.s1 <= boundary);
        self.active = still;
        plan.end = ended;

        if let Some(late) = self.queued.iter().find(|s| s.s0 < boundary) {
            return Err(SimError::Protocol(format!("session {} missed its start boundary {}", late.id, late.s0)));
        }

        if let TriggerPolicy::Automatic {
            density_threshold,
            watch,
            min_session_len,
        } = self.policy.clone()
        {
            for w in &watch {
                let hot = w
                    .region
                    .iter()
                    .filter_map(|id| observations.get(id))
                    .any(|v| *v >= density_threshold);
                let s1 = boundary + min_session_len.max(1);
                if hot && !self.conflicts(&w.region, boundary, s1) {
                    let mut region = w.region.clone();
                    region.sort_unstable();
                    region.dedup();
                    let session = self.allocate(region, boundary, s1, TriggerMode::Automatic)?;
                    self.queued.push(session);
                }
            }
        }

        let (starting, later): (Vec<_>, Vec<_>) = std::mem::take(&mut self.queued).into_iter().partition(|s| s.s0 == boundary);
        self.queued = later;
        let mut starting = starting;
        starting.sort_by_key(|s| s.id);
        self.active.extend(starting.iter().cloned());
        plan.start = starting;
        Ok(plan)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multilevel::WatchRegion;
    use num_rational::Ratio;

    fn two_level(policy: TriggerPolicy) -> Coordinator {
        let mut c = Coordinator::new(policy);
        c.register_level(LevelSpec::stepped(0, Ratio::from_integer(3))).unwrap();
        c.register_level(LevelSpec::stepped(1, Ratio::from_integer(1))).unwrap();
        c
    }

    fn ids(v: &[u64]) -> Vec<EntityId> {
        v.iter().map(|&i| EntityId(i)).collect()
    }

    #[test]
    fn register_computes_alignment() {
        let mut c = Coordinator::new(TriggerPolicy::Manual);
        assert_eq!(c.register_level(LevelSpec::stepped(0, Ratio::from_integer(3))).unwrap().ratio, None);
        let h = c.register_level(LevelSpec::stepped(1, Ratio::from_integer(1))).unwrap();
        assert_eq!(h.ratio, Some(3));
        let h2 = c.register_level(LevelSpec::continuous(2, Ratio::new(1, 10))).unwrap();
        assert_eq!(h2.ratio, None);
        assert_eq!(c.refinement_ratio().unwrap(), 3);
    }

    #[test]
    fn register_rejects_misaligned_levels() {
        let mut c = Coordinator::new(TriggerPolicy::Manual);
        c.register_level(LevelSpec::stepped(0, Ratio::from_integer(1))).unwrap();
        assert!(c.register_level(LevelSpec::stepped(1, Ratio::new(3, 10))).is_err());
        let mut eq = Coordinator::new(TriggerPolicy::Manual);
        eq.register_level(LevelSpec::stepped(0, Ratio::from_integer(2))).unwrap();
        assert_eq!(eq.register_level(LevelSpec::stepped(1, Ratio::from_integer(2))).unwrap().ratio, Some(1));
    }

    #[test]
    fn manual_session_lifecycle() {
        let mut c = two_level(TriggerPolicy::Manual);
        let s = c.trigger_refinement(ids(&[3, 1]), 10, 20, TriggerMode::Manual, 0).unwrap();
        assert_eq!(s.span(), 10);
        assert_eq!(s.expected_fine_steps(), 30);
        assert_eq!(s.region, ids(&[1, 3]));
        let none = BTreeMap::new();
        for b in 0..10 {
            assert!(c.plan_boundary(b, &none).unwrap().is_empty());
        }
        let p = c.plan_boundary(10, &none).unwrap();
        assert_eq!(p.start, vec![s.clone()]);
        for b in 11..20 {
            assert!(c.plan_boundary(b, &none).unwrap().is_empty());
        }
        assert_eq!(c.plan_boundary(20, &none).unwrap().end, vec![s]);
        assert!(c.active_sessions().is_empty());
    }

    #[test]
    fn overlapping_requests_are_rejected() {
        let mut c = two_level(TriggerPolicy::Manual);
        c.trigger_refinement(ids(&[1, 2]), 5, 15, TriggerMode::Manual, 0).unwrap();
        assert!(c.trigger_refinement(ids(&[2, 3]), 10, 12, TriggerMode::Manual, 0).is_err());
        // same region, disjoint time: fine
        c.trigger_refinement(ids(&[1, 2]), 15, 18, TriggerMode::Manual, 0).unwrap();
        assert!(c.trigger_refinement(ids(&[7]), 3, 3, TriggerMode::Manual, 0).is_err());
        assert!(c.trigger_refinement(ids(&[7]), 3, 5, TriggerMode::Manual, 4).is_err());
    }

    #[test]
    fn automatic_trigger_fires_on_density_spike() {
        let policy = TriggerPolicy::Automatic {
            density_threshold: 8.0,
            watch: vec![WatchRegion { region: ids(&[4, 5]) }],
            min_session_len: 5,
        };
        let mut c = two_level(policy);
        let mut obs = BTreeMap::new();
        obs.insert(EntityId(4), 3.0);
        obs.insert(EntityId(5), 2.0);
        assert!(c.plan_boundary(1, &obs).unwrap().is_empty());
        obs.insert(EntityId(5), 9.0);
        let p = c.plan_boundary(2, &obs).unwrap();
        assert_eq!(p.start.len(), 1);
        let s = &p.start[0];
        assert_eq!((s.s0, s.s1, s.trigger), (2, 7, TriggerMode::Automatic));
        // still hot, but the region is busy
        assert!(c.plan_boundary(3, &obs).unwrap().start.is_empty());
        assert_eq!(c.plan_boundary(7, &BTreeMap::new()).unwrap().end.len(), 1);
    }

    #[test]
    fn manual_and_automatic_sessions_match() {
        let mut manual = two_level(TriggerPolicy::Manual);
        let m = manual.trigger_refinement(ids(&[4, 5]), 2, 7, TriggerMode::Manual, 0).unwrap();
        let mut auto = two_level(TriggerPolicy::Automatic {
            density_threshold: 1.0,
            watch: vec![WatchRegion { region: ids(&[5, 4]) }],
            min_session_len: 5,
        });
        let mut obs = BTreeMap::new();
        obs.insert(EntityId(4), 1.0);
        let mut a = auto.plan_boundary(2, &obs).unwrap().start;
        let a = a.remove(0);
        assert_eq!((a.id, &a.region, a.s0, a.s1, a.ratio, a.entity), (m.id, &m.region, m.s0, m.s1, m.ratio, m.entity));
    }
}
