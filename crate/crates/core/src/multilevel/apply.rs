use std::collections::{BTreeMap, BTreeSet};

use super::session::{RefinementSession, SessionAudit};
use crate::error::{Result, SimError};
use crate::kernel::{EntityId, Model, Slot};

/// Freezes the session's region and installs its fine-level entity.
///
/// All region entities must be present in `slots` (i.e. resident on the
/// calling LP).
pub fn start_session<M: Model>(
    model: &M,
    slots: &mut BTreeMap<EntityId, Slot<M::State>>,
    frozen: &mut BTreeSet<EntityId>,
    aliases: &mut BTreeMap<EntityId, EntityId>,
    session: &RefinementSession,
) -> Result<()> {
    let mut region = Vec::with_capacity(session.region.len());
    for id in &session.region {
        if frozen.contains(id) {
            return Err(SimError::Refinement(format!("entity {id} is already part of another session")));
        }
        let slot = slots
            .get(id)
            .ok_or_else(|| SimError::Refinement(format!("region entity {id} is not resident for session {}", session.id)))?;
        region.push((*id, &slot.entity.state));
    }
    let fine = model.refine(session, &region)?;
    if fine.id != session.entity {
        return Err(SimError::Refinement(format!(
            "model built fine entity {} but session {} expects {}",
            fine.id, session.id, session.entity
        )));
    }
    if slots.contains_key(&fine.id) {
        return Err(SimError::Refinement(format!("fine entity id {} already in use", fine.id)));
    }
    for id in &session.region {
        frozen.insert(*id);
        aliases.insert(*id, session.entity);
    }
    slots.insert(fine.id, Slot::new(fine));
    Ok(())
}

/// Coarsens the fine entity back into the region and removes it.
pub fn end_session<M: Model>(
    model: &M,
    slots: &mut BTreeMap<EntityId, Slot<M::State>>,
    frozen: &mut BTreeSet<EntityId>,
    aliases: &mut BTreeMap<EntityId, EntityId>,
    session: &RefinementSession,
) -> Result<SessionAudit> {
    let fine = slots
        .remove(&session.entity)
        .ok_or_else(|| SimError::Protocol(format!("session {} has no fine entity to coarsen", session.id)))?;
    let (updates, audit) = {
        let mut region = Vec::with_capacity(session.region.len());
        for id in &session.region {
            let slot = slots
                .get(id)
                .ok_or_else(|| SimError::Protocol(format!("frozen entity {id} of session {} vanished", session.id)))?;
            region.push((*id, &slot.entity.state));
        }
        model.coarsen(session, &fine.entity.state, &region)?
    };
    if audit.fine_steps != session.expected_fine_steps() {
        return Err(SimError::Protocol(format!(
            "session {} fine clock misaligned: {} fine steps executed, expected {} ({} x {})",
            session.id,
            audit.fine_steps,
            session.expected_fine_steps(),
            session.ratio,
            session.span()
        )));
    }
    for (id, state) in updates {
        if !session.contains(id) {
            return Err(SimError::Protocol(format!("coarsening of session {} wrote non-region entity {id}", session.id)));
        }
        if let Some(slot) = slots.get_mut(&id) {
            slot.entity.state = state;
        }
    }
    for id in &session.region {
        frozen.remove(id);
        aliases.remove(id);
    }
    Ok(audit)
}
