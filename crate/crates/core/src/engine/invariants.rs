//! Structural lock invariants checked after every step.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{EventId, GlobalConfig};
use crate::graph::ContextId;
use crate::lang::AccessMode;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "invariant", rename_all = "snake_case")]
pub enum InvariantViolation {
    #[error("`{ctx}` mixes exclusive activations of different events: {eids:?}")]
    LockShape { ctx: ContextId, eids: Vec<EventId> },
    #[error("event `{eid}` holds contexts but not its dominator `{dominator}`")]
    LockLub { eid: EventId, dominator: ContextId },
    #[error("event `{eid}` holds `{ctx}` without a locked path from its target `{target}`")]
    PathLock { eid: EventId, ctx: ContextId, target: ContextId },
}

impl GlobalConfig {
    pub fn check_invariants(&self) -> Vec<InvariantViolation> {
        let mut out = Vec::new();
        for (id, c) in self.contexts() {
            let eids: BTreeSet<&EventId> = c.activations.iter().map(|a| a.eid()).collect();
            let any_ex = c.activations.iter().any(|a| a.mode() == AccessMode::Ex);
            if any_ex && eids.len() > 1 {
                out.push(InvariantViolation::LockShape { ctx: id.clone(), eids: eids.into_iter().cloned().collect() });
            }
        }
        for (eid, info) in self.live_events() {
            let held: BTreeSet<&ContextId> =
                self.contexts().filter(|(_, c)| c.holds(eid)).map(|(id, _)| id).collect();
            if held.is_empty() {
                continue;
            }
            let dom_held = held.contains(&info.dominator);
            if !dom_held && !info.early {
                out.push(InvariantViolation::LockLub { eid: eid.clone(), dominator: info.dominator.clone() });
            }
            if info.changed_ownership {
                continue;
            }
            let reach = self.locked_reach(&info.target, &held);
            for ctx in held {
                if ctx != &info.dominator && !reach.contains(ctx) {
                    out.push(InvariantViolation::PathLock {
                        eid: eid.clone(),
                        ctx: ctx.clone(),
                        target: info.target.clone(),
                    });
                }
            }
        }
        out
    }

    /// Held contexts reachable downward from `start` through held contexts.
    fn locked_reach(&self, start: &ContextId, held: &BTreeSet<&ContextId>) -> BTreeSet<ContextId> {
        let mut seen = BTreeSet::new();
        if !held.contains(start) {
            return seen;
        }
        let mut queue = VecDeque::from([start.clone()]);
        seen.insert(start.clone());
        while let Some(n) = queue.pop_front() {
            if let Ok(children) = self.graph().children(&n) {
                for c in children {
                    if held.contains(c) && seen.insert(c.clone()) {
                        queue.push_back(c.clone());
                    }
                }
            }
        }
        seen
    }
}
