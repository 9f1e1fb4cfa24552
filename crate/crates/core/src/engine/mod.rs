//! The inter-context state machine.
//!
//! A [`GlobalConfig`] holds every context instance (queue, store,
//! activations), the live events and the ownership graph. The scheduler
//! picks one of [`GlobalConfig::enabled`] and [`GlobalConfig::apply`]s it;
//! configurations are values, so exploration can branch freely.

mod apply;
mod invariants;
mod trace;

use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::{ContextId, GraphError, OwnershipGraph};
use crate::lang::ast::{MethodDef, Program, Stmt, StmtKind, Type};
use crate::lang::{AccessMode, Env, EventSpec, Expr, Store, Value};

pub use apply::Transition;
pub use invariants::InvariantViolation;
pub use trace::{program_digest, replay, ReplayError, Trace, TraceDetail, TraceEntry, TraceFile, TraceHeader, TRACE_SCHEMA_VERSION};

/// Name of the synthesized readonly method that captures a subtree.
pub const SNAPSHOT_METHOD: &str = "__snapshot";
/// Optional per-class hook; returning `unit` excludes the context from snapshots.
pub const STATE_HOOK: &str = "state";

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId(Arc<str>);

impl EventId {
    pub fn new(s: impl AsRef<str>) -> Self {
        EventId(Arc::from(s.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl Serialize for EventId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for EventId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(EventId::new(String::deserialize(d)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decorator {
    Synch,
    Asynch,
    Event,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "request", rename_all = "snake_case")]
pub enum Request {
    Call {
        eid: EventId,
        method: String,
        args: Vec<Value>,
        decorator: Decorator,
        mode: AccessMode,
        /// Caller context and activation awaiting a synchronous reply.
        reply_to: Option<(ContextId, u32)>,
    },
    LubMarker {
        eid: EventId,
        method: String,
        args: Vec<Value>,
        target: ContextId,
        mode: AccessMode,
        /// `false` when the target request was already queued by an early start.
        forward: bool,
    },
}

impl Request {
    pub fn eid(&self) -> &EventId {
        match self {
            Request::Call { eid, .. } | Request::LubMarker { eid, .. } => eid,
        }
    }

    pub fn mode(&self) -> AccessMode {
        match self {
            Request::Call { mode, .. } | Request::LubMarker { mode, .. } => *mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "activation", rename_all = "snake_case")]
pub enum Activation {
    Running {
        eid: EventId,
        mode: AccessMode,
        decorator: Decorator,
        id: u32,
        lenv: Env,
        stmt: Vec<Stmt>,
        reply_to: Option<(ContextId, u32)>,
    },
    /// Lock retained after the code finished, or taken without running code.
    Placeholder { eid: EventId, mode: AccessMode },
}

impl Activation {
    pub fn eid(&self) -> &EventId {
        match self {
            Activation::Running { eid, .. } | Activation::Placeholder { eid, .. } => eid,
        }
    }

    pub fn mode(&self) -> AccessMode {
        match self {
            Activation::Running { mode, .. } | Activation::Placeholder { mode, .. } => *mode,
        }
    }

    fn sort_key(&self) -> (&EventId, u32) {
        match self {
            Activation::Placeholder { eid, .. } => (eid, 0),
            Activation::Running { eid, id, .. } => (eid, id + 1),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContextState {
    pub queue: Vec<Request>,
    pub store: Store,
    pub genv: Env,
    pub activations: Vec<Activation>,
}

impl ContextState {
    pub fn holds(&self, eid: &EventId) -> bool {
        self.activations.iter().any(|a| a.eid() == eid)
    }

    pub fn has_ex(&self) -> bool {
        self.activations.iter().any(|a| a.mode() == AccessMode::Ex)
    }

    /// Inserts in canonical order; a second placeholder of one event is dropped.
    pub fn insert_activation(&mut self, a: Activation) {
        if matches!(a, Activation::Placeholder { .. })
            && self.activations.iter().any(|b| matches!(b, Activation::Placeholder { .. }) && b.eid() == a.eid())
        {
            return;
        }
        let pos = self.activations.partition_point(|b| b.sort_key() < a.sort_key());
        self.activations.insert(pos, a);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EventInfo {
    pub target: ContextId,
    pub method: String,
    pub args: Vec<Value>,
    pub mode: AccessMode,
    pub creator: Option<EventId>,
    /// Dominator of the target when the event was dispatched.
    pub dominator: ContextId,
    pub entry_returned: bool,
    pub next_activation: u32,
    /// Events created by this one, dispatched once it commits.
    pub nested: Vec<(ContextId, String, Vec<Value>)>,
    pub changed_ownership: bool,
    /// Started before its dominator lock was granted.
    pub early: bool,
    pub snapshot: BTreeMap<ContextId, Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Undispatched {
    pub eid: EventId,
    pub target: ContextId,
    pub method: String,
    pub args: Vec<Value>,
    pub tick: u64,
    pub creator: Option<EventId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Committed,
    Failed { reason: String },
}

/// A finished event in release order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub eid: EventId,
    pub target: ContextId,
    pub method: String,
    pub args: Vec<Value>,
    pub issue_tick: u64,
    pub commit_tick: u64,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub snapshot: BTreeMap<ContextId, Value>,
}

/// An auto-lock path acquisition in progress.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PendingCall {
    pub id: u32,
    pub eid: EventId,
    /// Intermediate contexts still to lock, top-down.
    pub path: Vec<ContextId>,
    pub target: ContextId,
    pub request: Request,
    /// Async caller whose `emit` is erased once the request is delivered.
    pub emitter: Option<(ContextId, u32)>,
    /// Context the event must hold before delivery (early-started events).
    pub gate: Option<ContextId>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EngineOptions {
    /// Test hook: every event is sequenced at its own target.
    pub unsafe_no_dominator: bool,
    /// Let events start on privately owned contexts before their dominator lock.
    pub opt_unshared_start: bool,
    /// At most one event in flight; client events in list order; nested events dropped.
    pub linear: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("transition {0} is not enabled")]
    StaleChoice(String),
    #[error("unknown context `{0}`")]
    UnknownContext(ContextId),
    #[error("class `{class}` has no method `{method}`")]
    UnknownMethod { class: String, method: String },
    #[error("invalid initial state: {0}")]
    Setup(String),
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("no terminal state within {0} steps")]
    StepLimit(usize),
}

#[derive(Debug, Clone)]
pub struct GlobalConfig {
    program: Arc<Program>,
    graph: Arc<OwnershipGraph>,
    contexts: BTreeMap<ContextId, Arc<ContextState>>,
    events: BTreeMap<EventId, EventInfo>,
    undispatched: Vec<Undispatched>,
    issue_ticks: BTreeMap<EventId, u64>,
    history: Vec<HistoryEntry>,
    pending_calls: Vec<PendingCall>,
    next_call: u32,
    clock: u64,
    options: EngineOptions,
    trace: Trace,
}

/// Adds the synthesized snapshot method to every class.
pub fn with_snapshot_methods(program: &Program) -> Program {
    let mut p = program.clone();
    for class in p.classes.values_mut() {
        if class.methods.contains_key(SNAPSHOT_METHOD) {
            continue;
        }
        let span = class.span;
        let mut body: Vec<Stmt> = class
            .owns
            .iter()
            .filter(|c| program.classes.contains_key(*c))
            .map(|c| {
                let call = Stmt::new(
                    StmtKind::Call {
                        dest: None,
                        target: Expr::Var("__c".into()),
                        method: SNAPSHOT_METHOD.into(),
                        args: vec![],
                        kind: crate::lang::CallKind::Sync,
                    },
                    span,
                );
                Stmt::new(StmtKind::ForChildren { var: "__c".into(), class: c.clone(), body: vec![call] }, span)
            })
            .collect();
        body.push(Stmt::new(StmtKind::Return(Expr::Lit(Value::Unit)), span));
        class.methods.insert(
            SNAPSHOT_METHOD.into(),
            Arc::new(MethodDef {
                name: SNAPSHOT_METHOD.into(),
                params: vec![],
                ret: Type::Unit,
                mode: AccessMode::Ro,
                body,
                span,
            }),
        );
    }
    p
}

/// Builds the initial graph and stores from the main script.
pub fn initial_world(program: &Program) -> Result<(OwnershipGraph, BTreeMap<ContextId, Store>), EngineError> {
    let mut graph = OwnershipGraph::new();
    let mut stores = BTreeMap::new();
    for inst in &program.main.instances {
        let class = program
            .class(&inst.class)
            .ok_or_else(|| EngineError::Setup(format!("unknown class `{}`", inst.class)))?;
        graph.add_context(inst.id.clone(), inst.class.clone())?;
        let mut store: Store = class.fields.iter().map(|f| (f.name.clone(), f.init.clone())).collect();
        for (f, v) in &inst.inits {
            if !store.contains_key(f) {
                return Err(EngineError::Setup(format!("`{}` has no field `{f}`", inst.id)));
            }
            store.insert(f.clone(), v.clone());
        }
        stores.insert(inst.id.clone(), store);
    }
    let mut edges = Vec::new();
    for e in &program.main.edges {
        let (pc, cc) = match (graph.class_of(&e.parent), graph.class_of(&e.child)) {
            (Some(p), Some(c)) => (p.to_string(), c.to_string()),
            _ => return Err(EngineError::Setup(format!("unknown instance in `{}` -> `{}`", e.parent, e.child))),
        };
        if !program.class(&pc).is_some_and(|c| c.owns.contains(&cc)) {
            return Err(EngineError::Setup(format!("class `{pc}` does not own `{cc}`")));
        }
        edges.push((e.parent.clone(), e.child.clone()));
    }
    graph.add_edges_bulk(&edges)?;
    for s in &program.main.sets {
        let store = stores
            .get_mut(&s.ctx)
            .ok_or_else(|| EngineError::Setup(format!("unknown instance `{}`", s.ctx)))?;
        if !store.contains_key(&s.field) {
            return Err(EngineError::Setup(format!("`{}` has no field `{}`", s.ctx, s.field)));
        }
        store.insert(s.field.clone(), s.value.clone());
    }
    Ok((graph, stores))
}

impl GlobalConfig {
    /// Initial configuration running the program's own main-script events.
    pub fn new(program: &Program, options: EngineOptions) -> Result<Self, EngineError> {
        let events = program.main.events.clone();
        Self::with_events(program, &events, options)
    }

    /// Initial configuration with an explicit client event list; event `i`
    /// (0-based) is named `E{i+1}`.
    pub fn with_events(program: &Program, events: &[EventSpec], options: EngineOptions) -> Result<Self, EngineError> {
        let (graph, stores) = initial_world(program)?;
        Self::from_parts(Arc::new(with_snapshot_methods(program)), graph, stores, events, options)
    }

    /// Configuration over an existing world, used by the simulator and the
    /// linear oracle.
    pub fn from_parts(
        program: Arc<Program>,
        graph: OwnershipGraph,
        stores: BTreeMap<ContextId, Store>,
        events: &[EventSpec],
        options: EngineOptions,
    ) -> Result<Self, EngineError> {
        let mut contexts = BTreeMap::new();
        for id in graph.nodes() {
            let store = stores.get(id).cloned().unwrap_or_default();
            contexts.insert(id.clone(), Arc::new(ContextState { store, ..Default::default() }));
        }
        let mut cfg = GlobalConfig {
            program,
            graph: Arc::new(graph),
            contexts,
            events: BTreeMap::new(),
            undispatched: Vec::new(),
            issue_ticks: BTreeMap::new(),
            history: Vec::new(),
            pending_calls: Vec::new(),
            next_call: 0,
            clock: 0,
            options,
            trace: Trace::default(),
        };
        for (i, e) in events.iter().enumerate() {
            cfg.submit_as(EventId::new(format!("E{}", i + 1)), e)?;
        }
        Ok(cfg)
    }

    /// Queues a client event for dispatch; it becomes dispatchable once all
    /// earlier-tick client events are dispatched.
    pub fn submit_as(&mut self, eid: EventId, e: &EventSpec) -> Result<(), EngineError> {
        let class = self
            .graph
            .class_of(&e.target)
            .ok_or_else(|| EngineError::UnknownContext(e.target.clone()))?;
        if self.program.method(class, &e.method).is_none() {
            return Err(EngineError::UnknownMethod { class: class.to_string(), method: e.method.clone() });
        }
        self.undispatched.push(Undispatched {
            eid,
            target: e.target.clone(),
            method: e.method.clone(),
            args: e.args.clone(),
            tick: e.tick,
            creator: None,
        });
        Ok(())
    }

    pub fn program(&self) -> &Program {
        &self.program
    }

    pub fn program_arc(&self) -> &Arc<Program> {
        &self.program
    }

    pub fn graph(&self) -> &OwnershipGraph {
        &self.graph
    }

    pub fn options(&self) -> EngineOptions {
        self.options
    }

    pub fn context(&self, id: &ContextId) -> Option<&ContextState> {
        self.contexts.get(id).map(|c| &**c)
    }

    /// Direct access for building configurations by hand in tests and tools.
    pub fn context_mut(&mut self, id: &ContextId) -> Option<&mut ContextState> {
        self.contexts.get_mut(id).map(Arc::make_mut)
    }

    pub fn contexts(&self) -> impl Iterator<Item = (&ContextId, &ContextState)> {
        self.contexts.iter().map(|(k, v)| (k, &**v))
    }

    pub fn live_events(&self) -> &BTreeMap<EventId, EventInfo> {
        &self.events
    }

    pub fn undispatched(&self) -> &[Undispatched] {
        &self.undispatched
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    pub fn pending_calls(&self) -> &[PendingCall] {
        &self.pending_calls
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn clear_trace(&mut self) {
        self.trace = Trace::default();
    }

    pub fn issue_tick(&self, eid: &EventId) -> Option<u64> {
        self.issue_ticks.get(eid).copied()
    }

    /// All stores of real contexts.
    pub fn stores(&self) -> BTreeMap<ContextId, Store> {
        self.contexts
            .iter()
            .filter(|(id, _)| !self.graph.is_virtual(id))
            .map(|(id, c)| (id.clone(), c.store.clone()))
            .collect()
    }

    pub fn is_terminal(&self) -> bool {
        self.enabled().is_empty()
    }

    /// No events left anywhere: nothing undispatched, live or pending.
    pub fn is_quiescent(&self) -> bool {
        self.undispatched.is_empty() && self.events.is_empty() && self.pending_calls.is_empty()
    }

    /// Canonical digest of the final state: stores and real edges.
    pub fn store_digest(&self) -> String {
        store_digest(&self.stores(), &self.graph)
    }

    /// Hash of everything that determines future behaviour and the outcome
    /// history; ticks and the trace are excluded so equivalent states merge.
    pub fn state_key(&self) -> u128 {
        let mut lo = std::collections::hash_map::DefaultHasher::new();
        let mut hi = std::collections::hash_map::DefaultHasher::new();
        0xA5u8.hash(&mut hi);
        for h in [&mut lo, &mut hi] {
            self.graph.hash(h);
            for (id, c) in &self.contexts {
                id.hash(h);
                c.hash(h);
            }
            self.events.hash(h);
            for u in &self.undispatched {
                (&u.eid, &u.target, &u.method, &u.args, u.tick, &u.creator).hash(h);
            }
            for e in &self.history {
                (&e.eid, &e.outcome, &e.snapshot).hash(h);
            }
            self.pending_calls.hash(h);
            self.next_call.hash(h);
        }
        ((hi.finish() as u128) << 64) | lo.finish() as u128
    }
}

/// SHA-256 over the canonical JSON of stores plus real edges.
pub fn store_digest(stores: &BTreeMap<ContextId, Store>, graph: &OwnershipGraph) -> String {
    #[derive(Serialize)]
    struct Canon<'a> {
        stores: &'a BTreeMap<ContextId, Store>,
        edges: Vec<(&'a ContextId, &'a ContextId)>,
    }
    let edges = graph.edges().filter(|(p, _)| !graph.is_virtual(p)).collect();
    let json = serde_json::to_vec(&Canon { stores, edges }).expect("stores serialize");
    hex::encode(Sha256::digest(&json))
}
