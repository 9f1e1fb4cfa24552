//! Bounded exhaustive exploration with deadlock, invariant, serializability
//! and commutativity checks.

mod deadlock;
mod oracle;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EngineError, EngineOptions, EventId, GlobalConfig, HistoryEntry, InvariantViolation, TraceEntry, Transition};
use crate::graph::ContextId;
use crate::lang::{AccessMode, EventSpec, Program};

pub use deadlock::{detect_deadlock, DeadlockWitness};
pub use oracle::{linear_execute, spec_of, store_hashes, LinearOracle};

/// Violations kept per category; counts keep going past this.
const KEEP: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bounds {
    pub max_configs: usize,
    pub max_depth: usize,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds { max_configs: 200_000, max_depth: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Violation,
    BoundExhausted,
}

impl Verdict {
    /// Process exit code for the verdict.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Pass => 0,
            Verdict::Violation => 2,
            Verdict::BoundExhausted => 3,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Violation => "VIOLATION",
            Verdict::BoundExhausted => "BOUND-EXHAUSTED",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Found<T> {
    pub what: T,
    /// Schedule reaching the offending configuration from the start.
    pub trace: Vec<Transition>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SerializabilityViolation {
    pub commit_order: Vec<EventId>,
    pub oracle_digests: Vec<String>,
    pub actual_digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RealtimeViolation {
    /// Precedes `second` in commit order...
    pub first: EventId,
    /// ...but committed before `first` was issued.
    pub second: EventId,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplorationReport {
    pub configs_visited: usize,
    pub transitions: usize,
    pub max_depth_reached: usize,
    pub terminal_states: BTreeSet<String>,
    pub deadlocks: Vec<Found<DeadlockWitness>>,
    pub serializability_violations: Vec<Found<SerializabilityViolation>>,
    pub realtime_violations: Vec<Found<RealtimeViolation>>,
    pub invariant_violations: Vec<Found<InvariantViolation>>,
    /// Terminal configurations with unfinished events and no deadlock cycle.
    pub stalls: Vec<Found<Vec<EventId>>>,
    pub errors: Vec<Found<String>>,
    pub violation_count: usize,
    pub bound_exhausted: bool,
}

impl ExplorationReport {
    pub fn verdict(&self) -> Verdict {
        if self.violation_count > 0 {
            Verdict::Violation
        } else if self.bound_exhausted {
            Verdict::BoundExhausted
        } else {
            Verdict::Pass
        }
    }

    fn note<T>(list: &mut Vec<Found<T>>, count: &mut usize, what: T, cfg: &GlobalConfig) {
        *count += 1;
        if list.len() < KEEP {
            list.push(Found { what, trace: schedule(cfg) });
        }
    }
}

impl fmt::Display for ExplorationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "verdict: {}", self.verdict())?;
        writeln!(f, "configs visited: {}", self.configs_visited)?;
        writeln!(f, "transitions: {}", self.transitions)?;
        writeln!(f, "max depth: {}", self.max_depth_reached)?;
        writeln!(f, "terminal states: {}", self.terminal_states.len())?;
        writeln!(f, "deadlocks: {}", self.deadlocks.len())?;
        for d in &self.deadlocks {
            let cyc: Vec<String> = d.what.cycle.iter().map(|(c, e)| format!("{e}@{c}")).collect();
            writeln!(f, "  cycle {} after {} steps", cyc.join(" -> "), d.trace.len())?;
        }
        writeln!(f, "serializability violations: {}", self.serializability_violations.len())?;
        writeln!(f, "real-time violations: {}", self.realtime_violations.len())?;
        writeln!(f, "invariant violations: {}", self.invariant_violations.len())?;
        for v in &self.invariant_violations {
            writeln!(f, "  {}", v.what)?;
        }
        writeln!(f, "stalls: {}", self.stalls.len())?;
        writeln!(f, "errors: {}", self.errors.len())?;
        for e in &self.errors {
            writeln!(f, "  {}", e.what)?;
        }
        if self.bound_exhausted {
            writeln!(f, "bound exhausted: result is inconclusive")?;
        }
        Ok(())
    }
}

fn schedule(cfg: &GlobalConfig) -> Vec<Transition> {
    cfg.trace().to_vec().into_iter().map(|e| e.detail.transition).collect()
}

/// What the exploration shows to an observer.
pub enum Visit<'a> {
    /// A configuration seen for the first time.
    Config(&'a GlobalConfig),
    /// A transition taken, including ones leading to known configurations.
    Step(&'a TraceEntry),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExploreOptions {
    pub bounds: Bounds,
    pub serializability: bool,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        ExploreOptions { bounds: Bounds::default(), serializability: true }
    }
}

/// Explores the program's own main-script events.
pub fn explore(program: &Program, engine: EngineOptions, opts: ExploreOptions) -> Result<ExplorationReport, EngineError> {
    let start = GlobalConfig::new(program, engine)?;
    explore_from(program, start, opts, &mut |_| {})
}

/// Depth-first exploration from `start`, deduplicating configurations by
/// their state key. Every configuration is checked for invariants and
/// deadlock; every terminal one for serializability and real-time order.
pub fn explore_from(
    program: &Program,
    start: GlobalConfig,
    opts: ExploreOptions,
    visit: &mut dyn FnMut(Visit<'_>),
) -> Result<ExplorationReport, EngineError> {
    let mut report = ExplorationReport::default();
    let mut oracle = if opts.serializability { Some(LinearOracle::new(program)?) } else { None };
    let base = start.trace().len();
    let mut seen = HashSet::new();
    seen.insert(start.state_key());
    let mut stack = vec![start];
    while let Some(cfg) = stack.pop() {
        visit(Visit::Config(&cfg));
        let depth = cfg.trace().len() - base;
        report.max_depth_reached = report.max_depth_reached.max(depth);
        let mut count = report.violation_count;
        for v in cfg.check_invariants() {
            ExplorationReport::note(&mut report.invariant_violations, &mut count, v, &cfg);
        }
        let deadlock = detect_deadlock(&cfg);
        if let Some(w) = deadlock.clone() {
            ExplorationReport::note(&mut report.deadlocks, &mut count, w, &cfg);
        }
        report.violation_count = count;
        let enabled = cfg.enabled();
        if enabled.is_empty() {
            report.terminal_states.insert(cfg.store_digest());
            if !cfg.is_quiescent() {
                if deadlock.is_none() {
                    let live: Vec<EventId> = cfg.live_events().keys().cloned().collect();
                    ExplorationReport::note(&mut report.stalls, &mut report.violation_count, live, &cfg);
                }
            } else if let Some(oracle) = oracle.as_mut() {
                match check_serializability(&cfg, oracle) {
                    Ok(()) => {}
                    Err(SerializabilityError::Digest(v)) => ExplorationReport::note(
                        &mut report.serializability_violations,
                        &mut report.violation_count,
                        v,
                        &cfg,
                    ),
                    Err(SerializabilityError::Realtime(v)) => {
                        ExplorationReport::note(&mut report.realtime_violations, &mut report.violation_count, v, &cfg)
                    }
                    Err(SerializabilityError::Engine(e)) => {
                        ExplorationReport::note(&mut report.errors, &mut report.violation_count, e.to_string(), &cfg)
                    }
                }
            }
            continue;
        }
        if depth >= opts.bounds.max_depth {
            report.bound_exhausted = true;
            continue;
        }
        // Reverse so the first enabled transition is explored first.
        for t in enabled.iter().rev() {
            report.transitions += 1;
            let next = match cfg.apply(t) {
                Ok(n) => n,
                Err(e) => {
                    ExplorationReport::note(&mut report.errors, &mut report.violation_count, format!("{t}: {e}"), &cfg);
                    continue;
                }
            };
            visit(Visit::Step(next.trace().last().expect("applied")));
            if seen.insert(next.state_key()) {
                if seen.len() > opts.bounds.max_configs {
                    report.bound_exhausted = true;
                    report.configs_visited = seen.len() - 1;
                    return Ok(report);
                }
                stack.push(next);
            }
        }
    }
    report.configs_visited = seen.len();
    Ok(report)
}

#[derive(Debug, Error)]
pub enum SerializabilityError {
    #[error("final state matches no linear execution of the commit order")]
    Digest(SerializabilityViolation),
    #[error("`{}` precedes `{}` in commit order but committed after it was issued", .0.first, .0.second)]
    Realtime(RealtimeViolation),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Pairs ordered one way in the history whose ticks demand the other order.
pub fn check_realtime(history: &[HistoryEntry]) -> Vec<RealtimeViolation> {
    let mut out = Vec::new();
    for (i, a) in history.iter().enumerate() {
        for b in &history[i + 1..] {
            if b.commit_tick < a.issue_tick {
                out.push(RealtimeViolation { first: a.eid.clone(), second: b.eid.clone() });
            }
        }
    }
    out
}

/// Checks a terminal configuration: its digest must be reachable by the
/// linear semantics over the commit order, and the order must respect
/// issue/commit ticks.
pub fn check_serializability(cfg: &GlobalConfig, oracle: &mut LinearOracle) -> Result<(), SerializabilityError> {
    if let Some(v) = check_realtime(cfg.history()).into_iter().next() {
        return Err(SerializabilityError::Realtime(v));
    }
    check_history_digest(cfg.history(), &cfg.store_digest(), oracle)
}

/// Digest half of [`check_serializability`] for an externally recorded history.
pub fn check_history_digest(
    history: &[HistoryEntry],
    actual: &str,
    oracle: &mut LinearOracle,
) -> Result<(), SerializabilityError> {
    let order: Vec<EventSpec> = history.iter().map(spec_of).collect();
    let outcomes = oracle.outcomes(&order)?;
    if outcomes.contains(actual) {
        Ok(())
    } else {
        Err(SerializabilityError::Digest(SerializabilityViolation {
            commit_order: history.iter().map(|h| h.eid.clone()).collect(),
            oracle_digests: outcomes.iter().cloned().collect(),
            actual_digest: actual.to_string(),
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommutativityReport {
    pub terminal_digests: BTreeSet<String>,
    pub configs_visited: usize,
}

impl CommutativityReport {
    pub fn converges(&self) -> bool {
        self.terminal_digests.len() == 1
    }
}

#[derive(Debug, Error)]
pub enum CommutativityError {
    #[error("events are not independent: both act on `{0}`")]
    NotIndependent(ContextId),
    #[error("exploration bound exhausted")]
    BoundExhausted,
    #[error("exploration found violations:\n{0}")]
    Violations(Box<ExplorationReport>),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Explores all interleavings of two events dispatched together and
/// reports the terminal digests. The events must never act on a common
/// context unless both are readonly.
pub fn check_commutativity(
    program: &Program,
    e0: &EventSpec,
    e1: &EventSpec,
    bounds: Bounds,
) -> Result<CommutativityReport, CommutativityError> {
    let events = [EventSpec { tick: 0, ..e0.clone() }, EventSpec { tick: 0, ..e1.clone() }];
    let start = GlobalConfig::with_events(program, &events, EngineOptions::default())?;
    let both_ro = events.iter().all(|e| {
        start
            .graph()
            .class_of(&e.target)
            .and_then(|class| program.method(class, &e.method))
            .is_some_and(|m| m.mode == AccessMode::Ro)
    });
    let mut touched: BTreeMap<EventId, BTreeSet<ContextId>> = BTreeMap::new();
    let report = explore_from(
        program,
        start,
        ExploreOptions { bounds, serializability: false },
        &mut |v| {
            if let Visit::Step(e) = v {
                if let Some(eid) = &e.eid {
                    touched.entry(eid.clone()).or_default().extend(e.detail.touched.iter().cloned());
                }
            }
        },
    )?;
    let empty = BTreeSet::new();
    let t0 = touched.get(&EventId::new("E1")).unwrap_or(&empty);
    let t1 = touched.get(&EventId::new("E2")).unwrap_or(&empty);
    if !both_ro {
        if let Some(c) = t0.intersection(t1).next() {
            return Err(CommutativityError::NotIndependent(c.clone()));
        }
    }
    if report.verdict() == Verdict::Violation {
        return Err(CommutativityError::Violations(Box::new(report)));
    }
    if report.bound_exhausted {
        return Err(CommutativityError::BoundExhausted);
    }
    Ok(CommutativityReport { terminal_digests: report.terminal_states, configs_visited: report.configs_visited })
}

#[cfg(test)]
mod tests;
