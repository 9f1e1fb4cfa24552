//! The ownership network: a DAG of context instances with cached dominators.
//!
//! An edge `parent -> child` means `child` is directly owned by `parent`.
//! The dominator of a context is the least upper bound of the context and
//! every context it shares a descendant with; it is the point where
//! conflicting events are sequenced.

mod class_dag;
mod dump;
mod id;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::hash::{Hash, Hasher};

use thiserror::Error;

pub use class_dag::{check_class_dag, ClassDagVerdict, ContextClassDecl};
pub use dump::{GraphRecord, LoadError};
pub use id::ContextId;

/// Above this many nodes an ownership change triggers a full dominator recompute.
pub const DEFAULT_RECOMPUTE_THRESHOLD: usize = 256;

const VIRTUAL_PREFIX: &str = "<lub:";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("unknown context `{0}`")]
    UnknownContext(ContextId),
    #[error("context `{0}` already exists")]
    DuplicateContext(ContextId),
    #[error("adding `{parent}` -> `{child}` would create an ownership cycle")]
    Cycle { parent: ContextId, child: ContextId },
    #[error("`{parent}` does not own `{child}`")]
    MissingEdge { parent: ContextId, child: ContextId },
    #[error("virtual context `{0}` cannot take part in ownership changes")]
    VirtualContext(ContextId),
}

#[derive(Debug, Clone)]
pub struct OwnershipGraph {
    /// Class name per node; `None` marks a synthesized virtual node.
    classes: BTreeMap<ContextId, Option<String>>,
    children: BTreeMap<ContextId, BTreeSet<ContextId>>,
    parents: BTreeMap<ContextId, BTreeSet<ContextId>>,
    /// Sorted root set -> virtual node that owns it.
    virtual_memo: BTreeMap<Vec<ContextId>, ContextId>,
    dominators: BTreeMap<ContextId, ContextId>,
    recompute_threshold: usize,
}

impl Default for OwnershipGraph {
    fn default() -> Self {
        OwnershipGraph {
            classes: BTreeMap::new(),
            children: BTreeMap::new(),
            parents: BTreeMap::new(),
            virtual_memo: BTreeMap::new(),
            dominators: BTreeMap::new(),
            recompute_threshold: DEFAULT_RECOMPUTE_THRESHOLD,
        }
    }
}

// Structural identity only: the dominator cache and memo are derived data.
impl PartialEq for OwnershipGraph {
    fn eq(&self, other: &Self) -> bool {
        self.classes == other.classes && self.children == other.children
    }
}

impl Eq for OwnershipGraph {}

impl Hash for OwnershipGraph {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.classes.hash(state);
        self.children.hash(state);
    }
}

/// Outcome of a lub query that does not mutate the graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LubQuery {
    Found(ContextId),
    /// No common ancestor exists; a virtual node owning these roots is needed.
    NeedsVirtual(Vec<ContextId>),
}

impl OwnershipGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_recompute_threshold(mut self, threshold: usize) -> Self {
        self.recompute_threshold = threshold;
        self
    }

    pub fn add_context(&mut self, id: ContextId, class: impl Into<String>) -> Result<(), GraphError> {
        if self.classes.contains_key(&id) {
            return Err(GraphError::DuplicateContext(id));
        }
        self.classes.insert(id.clone(), Some(class.into()));
        self.children.insert(id.clone(), BTreeSet::new());
        self.parents.insert(id.clone(), BTreeSet::new());
        self.dominators.insert(id.clone(), id);
        Ok(())
    }

    pub fn contains(&self, id: &ContextId) -> bool {
        self.classes.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Class of a node; `None` for virtual nodes and unknown ids.
    pub fn class_of(&self, id: &ContextId) -> Option<&str> {
        self.classes.get(id).and_then(|c| c.as_deref())
    }

    pub fn is_virtual(&self, id: &ContextId) -> bool {
        matches!(self.classes.get(id), Some(None))
    }

    pub fn nodes(&self) -> impl Iterator<Item = &ContextId> {
        self.classes.keys()
    }

    pub fn real_nodes(&self) -> impl Iterator<Item = &ContextId> {
        self.classes.iter().filter(|(_, c)| c.is_some()).map(|(id, _)| id)
    }

    pub fn virtual_nodes(&self) -> BTreeSet<ContextId> {
        self.classes
            .iter()
            .filter(|(_, c)| c.is_none())
            .map(|(id, _)| id.clone())
            .collect()
    }

    pub fn edges(&self) -> impl Iterator<Item = (&ContextId, &ContextId)> {
        self.children
            .iter()
            .flat_map(|(p, cs)| cs.iter().map(move |c| (p, c)))
    }

    fn check(&self, c: &ContextId) -> Result<(), GraphError> {
        if self.contains(c) {
            Ok(())
        } else {
            Err(GraphError::UnknownContext(c.clone()))
        }
    }

    pub fn children(&self, c: &ContextId) -> Result<&BTreeSet<ContextId>, GraphError> {
        self.children.get(c).ok_or_else(|| GraphError::UnknownContext(c.clone()))
    }

    pub fn parents(&self, c: &ContextId) -> Result<&BTreeSet<ContextId>, GraphError> {
        self.parents.get(c).ok_or_else(|| GraphError::UnknownContext(c.clone()))
    }

    /// Transitive closure of `children`, excluding `c` itself.
    pub fn descendants(&self, c: &ContextId) -> Result<BTreeSet<ContextId>, GraphError> {
        self.check(c)?;
        Ok(self.reach(c, &self.children))
    }

    /// Transitive closure of `parents`, excluding `c` itself.
    pub fn ancestors(&self, c: &ContextId) -> Result<BTreeSet<ContextId>, GraphError> {
        self.check(c)?;
        Ok(self.reach(c, &self.parents))
    }

    fn reach(
        &self,
        start: &ContextId,
        adj: &BTreeMap<ContextId, BTreeSet<ContextId>>,
    ) -> BTreeSet<ContextId> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<&ContextId> = adj[start].iter().collect();
        while let Some(n) = stack.pop() {
            if seen.insert(n.clone()) {
                stack.extend(adj[n].iter());
            }
        }
        seen
    }

    /// `true` when `a` is `b` or an ancestor of `b`.
    pub fn is_ancestor_or_self(&self, a: &ContextId, b: &ContextId) -> bool {
        if a == b {
            return true;
        }
        let mut seen = BTreeSet::new();
        let mut stack = vec![b];
        while let Some(n) = stack.pop() {
            for p in &self.parents[n] {
                if p == a {
                    return true;
                }
                if seen.insert(p) {
                    stack.push(p);
                }
            }
        }
        false
    }

    /// All contexts that share a descendant with `c`: owners of a
    /// descendant of `c`, plus incomparable contexts whose descendants
    /// intersect those of `c`.
    pub fn share(&self, c: &ContextId) -> Result<BTreeSet<ContextId>, GraphError> {
        self.check(c)?;
        let desc = self.descendants(c)?;
        Ok(self.share_with(c, &desc, &mut |n| self.reach(n, &self.children)))
    }

    fn share_with(
        &self,
        c: &ContextId,
        desc_c: &BTreeSet<ContextId>,
        desc_of: &mut dyn FnMut(&ContextId) -> BTreeSet<ContextId>,
    ) -> BTreeSet<ContextId> {
        let mut out = BTreeSet::new();
        if desc_c.is_empty() {
            return out;
        }
        for (x, class) in &self.classes {
            // Virtual nodes are lub witnesses, never sharers.
            if class.is_none() {
                continue;
            }
            if self.children[x].iter().any(|k| desc_c.contains(k)) {
                out.insert(x.clone());
                continue;
            }
            if x == c || desc_c.contains(x) {
                continue;
            }
            let desc_x = desc_of(x);
            if desc_x.contains(c) {
                continue;
            }
            if !desc_x.is_disjoint(desc_c) {
                out.insert(x.clone());
            }
        }
        out
    }

    /// Least upper bound without mutating the graph.
    ///
    /// Common ancestors are searched first; when several minimal ones exist
    /// the search climbs to their own least upper bound. Only when the set
    /// has no common ancestor at all is a virtual node required.
    pub fn lub_query(&self, set: &BTreeSet<ContextId>) -> Result<LubQuery, GraphError> {
        for c in set {
            self.check(c)?;
        }
        let mut current = set.clone();
        loop {
            if current.len() == 1 {
                return Ok(LubQuery::Found(current.into_iter().next().unwrap()));
            }
            let ub = self.common_upper_bounds(&current);
            if ub.is_empty() {
                return Ok(LubQuery::NeedsVirtual(self.roots_above(&current).into_iter().collect()));
            }
            let minimal: BTreeSet<ContextId> = ub
                .iter()
                .filter(|u| !ub.iter().any(|v| v != *u && self.is_ancestor_or_self(u, v)))
                .cloned()
                .collect();
            if minimal.len() == 1 {
                return Ok(LubQuery::Found(minimal.into_iter().next().unwrap()));
            }
            current = minimal;
        }
    }

    /// The set whose lub is the dominator of `c`: `share(c) ∪ {c}`, plus the
    /// real owners of `c` when `c` has descendants. Without the owners, an
    /// event entering `c` from an owner that bypasses the lub of the share
    /// set can hold `c` while an event targeting `c` holds that lub and
    /// waits for `c`.
    fn dominated_set(
        &self,
        c: &ContextId,
        desc_c: &BTreeSet<ContextId>,
        desc_of: &mut dyn FnMut(&ContextId) -> BTreeSet<ContextId>,
    ) -> BTreeSet<ContextId> {
        let mut set = self.share_with(c, desc_c, desc_of);
        set.insert(c.clone());
        if !desc_c.is_empty() {
            set.extend(self.parents[c].iter().filter(|p| !self.is_virtual(p)).cloned());
        }
        set
    }

    /// Least upper bound of a nonempty set, synthesizing (or reusing) a
    /// virtual ancestor when the set has no common ancestor.
    pub fn lub(&mut self, set: &BTreeSet<ContextId>) -> Result<ContextId, GraphError> {
        assert!(!set.is_empty(), "lub of an empty set");
        match self.lub_query(set)? {
            LubQuery::Found(id) => Ok(id),
            LubQuery::NeedsVirtual(roots) => Ok(self.synthesize_virtual(roots)),
        }
    }

    fn common_upper_bounds(&self, set: &BTreeSet<ContextId>) -> BTreeSet<ContextId> {
        let mut iter = set.iter();
        let first = iter.next().expect("nonempty");
        let mut ub = self.reach(first, &self.parents);
        ub.insert(first.clone());
        for c in iter {
            let mut up = self.reach(c, &self.parents);
            up.insert(c.clone());
            ub.retain(|u| up.contains(u));
        }
        ub
    }

    fn roots_above(&self, set: &BTreeSet<ContextId>) -> Vec<ContextId> {
        let mut roots = BTreeSet::new();
        for c in set {
            let mut up = self.reach(c, &self.parents);
            up.insert(c.clone());
            roots.extend(up.into_iter().filter(|u| self.parents[u].is_empty()));
        }
        roots.into_iter().collect()
    }

    fn synthesize_virtual(&mut self, roots: Vec<ContextId>) -> ContextId {
        if let Some(v) = self.virtual_memo.get(&roots) {
            return v.clone();
        }
        let names: Vec<&str> = roots.iter().map(|r| r.as_str()).collect();
        let base = format!("{VIRTUAL_PREFIX}{}>", names.join(","));
        let mut id = ContextId::new(&base);
        let mut n = 1;
        while self.classes.contains_key(&id) {
            id = ContextId::new(format!("{base}#{n}"));
            n += 1;
        }
        self.classes.insert(id.clone(), None);
        self.children.insert(id.clone(), roots.iter().cloned().collect());
        self.parents.insert(id.clone(), BTreeSet::new());
        for r in &roots {
            self.parents.get_mut(r).unwrap().insert(id.clone());
        }
        self.dominators.insert(id.clone(), id.clone());
        self.virtual_memo.insert(roots, id.clone());
        id
    }

    /// Cached dominator of `c`.
    pub fn dominator(&self, c: &ContextId) -> Result<&ContextId, GraphError> {
        self.dominators.get(c).ok_or_else(|| GraphError::UnknownContext(c.clone()))
    }

    /// Dominator of `c` computed from scratch on the current graph.
    pub fn compute_dominator(&mut self, c: &ContextId) -> Result<ContextId, GraphError> {
        self.check(c)?;
        let desc = self.descendants(c)?;
        let set = self.dominated_set(c, &desc, &mut |n| self.reach(n, &self.children));
        self.lub(&set)
    }

    pub fn recompute_all_dominators(&mut self) {
        let all: BTreeSet<ContextId> = self.classes.keys().cloned().collect();
        self.refresh(all);
    }

    fn refresh(&mut self, mut scope: BTreeSet<ContextId>) {
        loop {
            let before = self.classes.len();
            let desc: BTreeMap<ContextId, BTreeSet<ContextId>> = self
                .classes
                .keys()
                .map(|n| (n.clone(), self.reach(n, &self.children)))
                .collect();
            let mut updates = Vec::with_capacity(scope.len());
            for c in &scope {
                let set = self.dominated_set(c, &desc[c], &mut |n| desc[n].clone());
                updates.push((c.clone(), set));
            }
            for (c, set) in updates {
                let d = self.lub(&set).expect("nodes exist");
                self.dominators.insert(c, d);
            }
            if self.classes.len() == before {
                break;
            }
            // A synthesized node can change other share sets.
            scope = self.classes.keys().cloned().collect();
        }
    }

    /// Contexts whose dominator can change when the edge into `child`
    /// from `parent` is added or removed.
    fn affected_by(&self, parent: &ContextId, child: &ContextId) -> BTreeSet<ContextId> {
        let mut seeds = self.reach(child, &self.children);
        seeds.insert(child.clone());
        seeds.insert(parent.clone());
        let mut out = BTreeSet::new();
        for s in &seeds {
            out.insert(s.clone());
            out.extend(self.reach(s, &self.parents));
        }
        out
    }

    pub fn add_ownership(&mut self, parent: &ContextId, child: &ContextId) -> Result<(), GraphError> {
        self.check(parent)?;
        self.check(child)?;
        for n in [parent, child] {
            if self.is_virtual(n) {
                return Err(GraphError::VirtualContext(n.clone()));
            }
        }
        if self.is_ancestor_or_self(child, parent) {
            return Err(GraphError::Cycle { parent: parent.clone(), child: child.clone() });
        }
        if self.children[parent].contains(child) {
            return Ok(());
        }
        let mut scope = self.affected_by(parent, child);
        self.children.get_mut(parent).unwrap().insert(child.clone());
        self.parents.get_mut(child).unwrap().insert(parent.clone());
        scope.extend(self.affected_by(parent, child));
        self.refresh_scoped(scope);
        Ok(())
    }

    /// Cycle-checked edge insertion that leaves the dominator cache stale.
    fn insert_edge_unchecked(&mut self, parent: &ContextId, child: &ContextId) -> Result<(), GraphError> {
        self.check(parent)?;
        self.check(child)?;
        if self.is_ancestor_or_self(child, parent) {
            return Err(GraphError::Cycle { parent: parent.clone(), child: child.clone() });
        }
        self.children.get_mut(parent).unwrap().insert(child.clone());
        self.parents.get_mut(child).unwrap().insert(parent.clone());
        Ok(())
    }

    /// Adds many edges and recomputes every dominator once at the end.
    pub fn add_edges_bulk(&mut self, edges: &[(ContextId, ContextId)]) -> Result<(), GraphError> {
        for (p, c) in edges {
            self.insert_edge_unchecked(p, c)?;
        }
        self.recompute_all_dominators();
        Ok(())
    }

    pub fn remove_ownership(&mut self, parent: &ContextId, child: &ContextId) -> Result<(), GraphError> {
        self.check(parent)?;
        self.check(child)?;
        if !self.children[parent].contains(child) {
            return Err(GraphError::MissingEdge { parent: parent.clone(), child: child.clone() });
        }
        if self.is_virtual(parent) {
            return Err(GraphError::VirtualContext(parent.clone()));
        }
        let mut scope = self.affected_by(parent, child);
        self.children.get_mut(parent).unwrap().remove(child);
        self.parents.get_mut(child).unwrap().remove(parent);
        scope.extend(self.affected_by(parent, child));
        self.refresh_scoped(scope);
        Ok(())
    }

    fn refresh_scoped(&mut self, mut scope: BTreeSet<ContextId>) {
        if self.classes.len() > self.recompute_threshold {
            self.recompute_all_dominators();
            return;
        }
        scope.extend(self.virtual_nodes());
        self.refresh(scope);
    }

    /// `true` when every cached dominator matches a from-scratch recompute.
    pub fn dominator_cache_consistent(&self) -> bool {
        let mut scratch = self.clone();
        scratch.recompute_all_dominators();
        scratch.classes.len() == self.classes.len() && scratch.dominators == self.dominators
    }

    /// `true` when a DFS finds no cycle in the edge relation.
    pub fn is_acyclic(&self) -> bool {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Active,
            Done,
        }
        let mut mark: BTreeMap<&ContextId, Mark> = self.classes.keys().map(|k| (k, Mark::New)).collect();
        for root in self.classes.keys() {
            if mark[root] != Mark::New {
                continue;
            }
            let mut stack: Vec<(&ContextId, bool)> = vec![(root, false)];
            while let Some((n, exiting)) = stack.pop() {
                if exiting {
                    mark.insert(n, Mark::Done);
                    continue;
                }
                match mark[n] {
                    Mark::Done => continue,
                    Mark::Active => continue,
                    Mark::New => {}
                }
                mark.insert(n, Mark::Active);
                stack.push((n, true));
                for c in &self.children[n] {
                    match mark[c] {
                        Mark::Active => return false,
                        Mark::New => stack.push((c, false)),
                        Mark::Done => {}
                    }
                }
            }
        }
        true
    }

    /// Shortest downward path from `from` to `to` (both included), ties
    /// broken lexicographically.
    pub fn shortest_path(&self, from: &ContextId, to: &ContextId) -> Option<Vec<ContextId>> {
        let mut prev: BTreeMap<ContextId, ContextId> = BTreeMap::new();
        let mut queue = VecDeque::from([from.clone()]);
        let mut seen = BTreeSet::from([from.clone()]);
        while let Some(n) = queue.pop_front() {
            if &n == to {
                let mut path = vec![n.clone()];
                let mut cur = n;
                while let Some(p) = prev.get(&cur) {
                    path.push(p.clone());
                    cur = p.clone();
                }
                path.reverse();
                return Some(path);
            }
            for c in self.children.get(&n)? {
                if seen.insert(c.clone()) {
                    prev.insert(c.clone(), n.clone());
                    queue.push_back(c.clone());
                }
            }
        }
        None
    }

    pub fn dominators(&self) -> &BTreeMap<ContextId, ContextId> {
        &self.dominators
    }
}

#[cfg(test)]
mod tests;
