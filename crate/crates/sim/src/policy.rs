//! Elasticity policies. The eManager evaluates the policy once per window
//! and starts the migrations it names.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use aeon_core::graph::ContextId;

use crate::cluster::ServerId;
use crate::scenario::PolicySpec;

/// Destination of a policy move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dst {
    Existing(ServerId),
    /// The n-th fresh server requested in this round.
    Fresh(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Move {
    pub ctx: ContextId,
    pub src: ServerId,
    pub dst: Dst,
}

/// What a policy sees at the end of a window.
#[derive(Debug, Clone, Default)]
pub struct PolicyView {
    pub now: u64,
    pub window: u64,
    /// Servers that are up, with the contexts they host.
    pub hosted: BTreeMap<ServerId, BTreeSet<ContextId>>,
    /// Work units per server over the last window.
    pub server_load: BTreeMap<ServerId, u64>,
    /// Work units per context over the last window.
    pub ctx_load: BTreeMap<ContextId, u64>,
    /// Tick each context last started migrating.
    pub last_moved: BTreeMap<ContextId, u64>,
    /// Contexts with a migration in flight.
    pub migrating: BTreeSet<ContextId>,
}

impl PolicyView {
    /// A context may move when it is idle of migrations and has not moved
    /// within the last window.
    pub fn movable(&self, c: &ContextId) -> bool {
        !self.migrating.contains(c) && self.last_moved.get(c).is_none_or(|t| t + self.window <= self.now)
    }

    fn active(&self, c: &ContextId) -> bool {
        self.ctx_load.get(c).copied().unwrap_or(0) > 0
    }
}

/// A pluggable placement policy.
pub trait ElasticityPolicy {
    fn window(&self) -> u64;
    fn decide(&mut self, view: &PolicyView) -> Vec<Move>;
}

pub fn from_spec(spec: &PolicySpec) -> Box<dyn ElasticityPolicy> {
    match *spec {
        PolicySpec::ServerContention { max_active, window, storage } => {
            Box::new(ServerContention { max_active, window: window.max(1), storage: storage.map(ServerId) })
        }
        PolicySpec::ResourceUtilization { lower, upper, threshold, window } => {
            Box::new(ResourceUtilization { lower, upper, threshold, window: window.max(1) })
        }
    }
}

/// Caps the number of recently active contexts per server. Overflow moves
/// to a server with room or to a fresh one; a server whose contexts all
/// went idle hands them to the storage server (or to the fullest other
/// server) and leaves the cluster.
#[derive(Debug, Clone)]
pub struct ServerContention {
    pub max_active: u32,
    pub window: u64,
    pub storage: Option<ServerId>,
}

impl ServerContention {
    fn cap(&self, s: ServerId) -> usize {
        if Some(s) == self.storage {
            0
        } else {
            self.max_active as usize
        }
    }
}

impl ElasticityPolicy for ServerContention {
    fn window(&self) -> u64 {
        self.window
    }

    fn decide(&mut self, view: &PolicyView) -> Vec<Move> {
        let mut moves = Vec::new();
        let mut active: BTreeMap<ServerId, usize> =
            view.hosted.iter().map(|(s, cs)| (*s, cs.iter().filter(|c| view.active(c)).count())).collect();
        let mut fresh_load: Vec<usize> = Vec::new();
        for (s, cs) in &view.hosted {
            let cap = self.cap(*s);
            let here: Vec<&ContextId> = cs.iter().filter(|c| view.active(c)).collect();
            if here.len() <= cap {
                continue;
            }
            for c in here.into_iter().skip(cap) {
                if !view.movable(c) {
                    continue;
                }
                let existing = active
                    .iter()
                    .find(|(t, n)| *t != s && !view.hosted[*t].is_empty() && **n < self.cap(**t))
                    .map(|(t, _)| *t);
                let dst = match existing {
                    Some(t) => {
                        *active.get_mut(&t).expect("listed") += 1;
                        Dst::Existing(t)
                    }
                    None => match fresh_load.iter().position(|n| *n < self.max_active as usize) {
                        Some(i) => {
                            fresh_load[i] += 1;
                            Dst::Fresh(i as u32)
                        }
                        None => {
                            fresh_load.push(1);
                            Dst::Fresh(fresh_load.len() as u32 - 1)
                        }
                    },
                };
                *active.get_mut(s).expect("listed") -= 1;
                moves.push(Move { ctx: c.clone(), src: *s, dst });
            }
        }
        // Scale in: drain servers whose contexts all went idle.
        for (s, cs) in &view.hosted {
            if Some(*s) == self.storage || cs.is_empty() || cs.iter().any(|c| view.active(c) || !view.movable(c)) {
                continue;
            }
            let target = self.storage.or_else(|| {
                view.hosted
                    .iter()
                    .filter(|(t, tcs)| *t != s && !tcs.is_empty())
                    .max_by_key(|(t, tcs)| (tcs.len(), std::cmp::Reverse(**t)))
                    .map(|(t, _)| *t)
            });
            if let Some(t) = target {
                moves.extend(cs.iter().map(|c| Move { ctx: c.clone(), src: *s, dst: Dst::Existing(t) }));
            }
        }
        moves
    }
}

/// Moves the busiest context off a server whose load exceeds
/// `upper + threshold`, and empties a server whose load stays below
/// `lower - threshold` when the rest of the cluster can absorb it.
#[derive(Debug, Clone)]
pub struct ResourceUtilization {
    pub lower: u64,
    pub upper: u64,
    pub threshold: u64,
    pub window: u64,
}

impl ElasticityPolicy for ResourceUtilization {
    fn window(&self) -> u64 {
        self.window
    }

    fn decide(&mut self, view: &PolicyView) -> Vec<Move> {
        let mut moves = Vec::new();
        let mut load: BTreeMap<ServerId, u64> =
            view.hosted.keys().map(|s| (*s, view.server_load.get(s).copied().unwrap_or(0))).collect();
        let mut fresh = 0;
        let used: BTreeSet<ServerId> = view.hosted.iter().filter(|(_, cs)| !cs.is_empty()).map(|(s, _)| *s).collect();
        for (s, cs) in &view.hosted {
            if load[s] <= self.upper + self.threshold || cs.len() < 2 {
                continue;
            }
            let Some(hot) = cs
                .iter()
                .filter(|c| view.movable(c))
                .max_by_key(|c| (view.ctx_load.get(*c).copied().unwrap_or(0), std::cmp::Reverse((*c).clone())))
            else {
                continue;
            };
            let units = view.ctx_load.get(hot).copied().unwrap_or(0);
            let dst = load
                .iter()
                .filter(|(t, l)| *t != s && used.contains(t) && **l + units <= self.upper)
                .min_by_key(|(t, l)| (**l, **t))
                .map(|(t, _)| *t);
            let dst = match dst {
                Some(t) => {
                    *load.get_mut(&t).expect("listed") += units;
                    Dst::Existing(t)
                }
                None => {
                    fresh += 1;
                    Dst::Fresh(fresh - 1)
                }
            };
            *load.get_mut(s).expect("listed") -= units;
            moves.push(Move { ctx: hot.clone(), src: *s, dst });
        }
        if !moves.is_empty() || used.len() < 2 {
            return moves;
        }
        // Scale in the least loaded server, if everything on it fits elsewhere.
        let floor = self.lower.saturating_sub(self.threshold);
        let Some((&s, _)) = load.iter().filter(|(s, l)| used.contains(s) && **l < floor).min_by_key(|(s, l)| (**l, **s))
        else {
            return moves;
        };
        let cs = &view.hosted[&s];
        if cs.iter().any(|c| !view.movable(c)) {
            return moves;
        }
        let mut plan = Vec::new();
        let mut trial = load.clone();
        for c in cs {
            let units = view.ctx_load.get(c).copied().unwrap_or(0);
            let Some(t) = trial
                .iter()
                .filter(|(t, l)| **t != s && used.contains(t) && **l + units <= self.upper)
                .min_by_key(|(t, l)| (**l, **t))
                .map(|(t, _)| *t)
            else {
                return moves;
            };
            *trial.get_mut(&t).expect("listed") += units;
            plan.push(Move { ctx: c.clone(), src: s, dst: Dst::Existing(t) });
        }
        plan
    }
}
