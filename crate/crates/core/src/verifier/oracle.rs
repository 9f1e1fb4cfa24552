//! The linear semantics: events run one at a time to commit.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use sha2::{Digest, Sha256};

use crate::engine::{EngineError, EngineOptions, GlobalConfig, HistoryEntry};
use crate::graph::ContextId;
use crate::lang::{EventSpec, Program, Store};

const LINEAR: EngineOptions = EngineOptions { unsafe_no_dominator: false, opt_unshared_start: false, linear: true };

/// Runs `events` in order, one at a time, always taking the first enabled
/// transition. Returns the digest of every real context's store.
pub fn linear_execute(program: &Program, events: &[EventSpec]) -> Result<BTreeMap<ContextId, String>, EngineError> {
    let mut cfg = GlobalConfig::with_events(program, events, LINEAR)?;
    loop {
        let en = cfg.enabled();
        let Some(t) = en.first() else { break };
        cfg = cfg.apply(t)?;
    }
    Ok(store_hashes(&cfg.stores()))
}

/// Per-context SHA-256 of each store's canonical JSON.
pub fn store_hashes(stores: &BTreeMap<ContextId, Store>) -> BTreeMap<ContextId, String> {
    stores
        .iter()
        .map(|(id, s)| (id.clone(), hex::encode(Sha256::digest(serde_json::to_vec(s).expect("store serializes")))))
        .collect()
}

/// Event spec replaying a finished history entry.
pub fn spec_of(h: &HistoryEntry) -> EventSpec {
    EventSpec { target: h.target.clone(), method: h.method.clone(), args: h.args.clone(), tick: 0, span: Default::default() }
}

/// Every final digest the linear semantics can reach for an event order.
/// Events still race internally through their own asynchronous calls, so
/// the result may hold more than one digest.
///
/// Quiescent configurations are cached per order prefix, so orders sharing
/// a prefix only explore the events after it.
pub struct LinearOracle {
    prefixes: HashMap<Vec<EventSpec>, Vec<GlobalConfig>>,
    cache: HashMap<Vec<EventSpec>, BTreeSet<String>>,
    pub max_configs: usize,
}

impl LinearOracle {
    pub fn new(program: &Program) -> Result<Self, EngineError> {
        let template = GlobalConfig::with_events(program, &[], LINEAR)?;
        let mut prefixes = HashMap::new();
        prefixes.insert(Vec::new(), vec![template.clone()]);
        Ok(LinearOracle { prefixes, cache: HashMap::new(), max_configs: 200_000 })
    }

    pub fn outcomes(&mut self, order: &[EventSpec]) -> Result<&BTreeSet<String>, EngineError> {
        if !self.cache.contains_key(order) {
            let ends = self.quiescent(order)?;
            let digests = ends.iter().map(GlobalConfig::store_digest).collect();
            self.cache.insert(order.to_vec(), digests);
        }
        Ok(&self.cache[order])
    }

    /// Distinct quiescent configurations after running `order` linearly.
    fn quiescent(&mut self, order: &[EventSpec]) -> Result<Vec<GlobalConfig>, EngineError> {
        let mut k = order.len();
        while !self.prefixes.contains_key(&order[..k]) {
            k -= 1;
        }
        let mut current = self.prefixes[&order[..k]].clone();
        for i in k..order.len() {
            let mut next = Vec::new();
            let mut digests = HashSet::new();
            for base in &current {
                let mut start = base.clone();
                start.submit_as(crate::engine::EventId::new(format!("E{}", i + 1)), &order[i])?;
                for mut end in self.run_all(start)? {
                    end.clear_trace();
                    if digests.insert(end.store_digest()) {
                        next.push(end);
                    }
                }
            }
            self.prefixes.insert(order[..=i].to_vec(), next.clone());
            current = next;
        }
        Ok(current)
    }

    /// Every terminal configuration reachable from `start`.
    fn run_all(&self, start: GlobalConfig) -> Result<Vec<GlobalConfig>, EngineError> {
        let mut seen = HashSet::new();
        let mut ends = Vec::new();
        let mut stack = vec![start];
        while let Some(cfg) = stack.pop() {
            let en = cfg.enabled();
            if en.is_empty() {
                ends.push(cfg);
                continue;
            }
            for t in &en {
                let next = cfg.apply(t)?;
                if seen.insert(next.state_key()) {
                    if seen.len() > self.max_configs {
                        return Err(EngineError::StepLimit(self.max_configs));
                    }
                    stack.push(next);
                }
            }
        }
        Ok(ends)
    }
}
