//! Deadlock detection over the holds/waits relation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::{EventId, GlobalConfig};
use crate::graph::ContextId;
use crate::lang::AccessMode;

/// A cycle `(ctx_0, e_0), ..., (ctx_n, e_n)` where `e_i` is activated at
/// `ctx_i` and has a request queued at `ctx_{i+1 mod n+1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeadlockWitness {
    pub cycle: Vec<(ContextId, EventId)>,
}

impl DeadlockWitness {
    /// Checks the closing condition against a configuration.
    pub fn holds_in(&self, cfg: &GlobalConfig) -> bool {
        let n = self.cycle.len();
        n > 0
            && self.cycle.iter().enumerate().all(|(i, (c, e))| {
                let next = &self.cycle[(i + 1) % n].0;
                cfg.context(c).is_some_and(|s| s.holds(e))
                    && cfg.context(next).is_some_and(|s| s.queue.iter().any(|r| r.eid() == e))
            })
    }
}

/// Finds a cycle of events each waiting in the queue of a context held by
/// the next one. Edges only link distinct events whose modes conflict: an
/// event queued where it is itself active, or a readonly event queued behind
/// readonly holders, is not blocked by the holder.
pub fn detect_deadlock(cfg: &GlobalConfig) -> Option<DeadlockWitness> {
    // Node: (ctx, eid) with eid activated at ctx.
    let mut mode_of: BTreeMap<&EventId, AccessMode> = BTreeMap::new();
    let mut holders: BTreeMap<&ContextId, Vec<&EventId>> = BTreeMap::new();
    for (id, c) in cfg.contexts() {
        for a in &c.activations {
            mode_of.insert(a.eid(), a.mode());
            let hs = holders.entry(id).or_default();
            if !hs.contains(&a.eid()) {
                hs.push(a.eid());
            }
        }
    }
    let nodes: Vec<(&ContextId, &EventId)> =
        holders.iter().flat_map(|(c, es)| es.iter().map(move |e| (*c, *e))).collect();
    let index: BTreeMap<(&ContextId, &EventId), usize> = nodes.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    for (i, (_, e)) in nodes.iter().enumerate() {
        for (c2, c2state) in cfg.contexts() {
            if !c2state.queue.iter().any(|r| r.eid() == *e) {
                continue;
            }
            for e2 in holders.get(c2).into_iter().flatten() {
                let conflict = mode_of[e] == AccessMode::Ex || mode_of[e2] == AccessMode::Ex;
                if e2 != e && conflict {
                    succ[i].push(index[&(c2, *e2)]);
                }
            }
        }
    }
    find_cycle(&succ).map(|cyc| DeadlockWitness {
        cycle: cyc.into_iter().map(|i| (nodes[i].0.clone(), nodes[i].1.clone())).collect(),
    })
}

/// Iterative DFS returning the first cycle found, as node indices.
fn find_cycle(succ: &[Vec<usize>]) -> Option<Vec<usize>> {
    let n = succ.len();
    let mut color = vec![0u8; n];
    for root in 0..n {
        if color[root] != 0 {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
        color[root] = 1;
        while let Some(&mut (v, ref mut k)) = stack.last_mut() {
            if *k < succ[v].len() {
                let w = succ[v][*k];
                *k += 1;
                match color[w] {
                    0 => {
                        color[w] = 1;
                        stack.push((w, 0));
                    }
                    1 => {
                        let start = stack.iter().position(|(x, _)| *x == w).expect("on stack");
                        return Some(stack[start..].iter().map(|(x, _)| *x).collect());
                    }
                    _ => {}
                }
            } else {
                color[v] = 2;
                stack.pop();
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::find_cycle;

    #[test]
    fn finds_two_cycle_and_ignores_dag() {
        assert_eq!(find_cycle(&[vec![1], vec![0]]), Some(vec![0, 1]));
        assert_eq!(find_cycle(&[vec![1, 2], vec![2], vec![]]), None);
        assert_eq!(find_cycle(&[vec![1], vec![2], vec![1]]), Some(vec![1, 2]));
    }
}
