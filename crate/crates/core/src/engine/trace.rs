//! Execution traces and deterministic replay.
//!
//! A trace file is JSON Lines: a header, one line per applied transition
//! and a footer with the final store digest. Lines starting with `#` are
//! comments.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{EngineError, EngineOptions, EventId, GlobalConfig, Transition};
use crate::graph::ContextId;
use crate::lang::Program;

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceDetail {
    pub transition: Transition,
    /// Contexts whose queue, activations or store the step changed.
    pub touched: Vec<ContextId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub step: u64,
    pub rule: String,
    pub ctx: Option<ContextId>,
    pub eid: Option<EventId>,
    pub detail: TraceDetail,
}

struct Node {
    entry: TraceEntry,
    prev: Option<Arc<Node>>,
    len: usize,
}

/// Persistent append-only list; cloning a configuration shares its trace.
#[derive(Clone, Default)]
pub struct Trace(Option<Arc<Node>>);

impl Trace {
    pub fn push(&mut self, entry: TraceEntry) {
        let len = self.len() + 1;
        self.0 = Some(Arc::new(Node { entry, prev: self.0.take(), len }));
    }

    pub fn len(&self) -> usize {
        self.0.as_ref().map_or(0, |n| n.len)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_none()
    }

    pub fn last(&self) -> Option<&TraceEntry> {
        self.0.as_ref().map(|n| &n.entry)
    }

    /// Entries oldest first.
    pub fn to_vec(&self) -> Vec<TraceEntry> {
        let mut out = Vec::with_capacity(self.len());
        let mut cur = self.0.as_deref();
        while let Some(n) = cur {
            out.push(n.entry.clone());
            cur = n.prev.as_deref();
        }
        out.reverse();
        out
    }
}

impl Drop for Trace {
    // Long chains would otherwise drop recursively.
    fn drop(&mut self) {
        let mut cur = self.0.take();
        while let Some(node) = cur {
            match Arc::try_unwrap(node) {
                Ok(mut n) => cur = n.prev.take(),
                Err(_) => break,
            }
        }
    }
}

impl std::fmt::Debug for Trace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Trace(len={})", self.len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema: u32,
    pub program_digest: String,
    pub seed: Option<u64>,
    pub options: EngineOptions,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Header(TraceHeader),
    Step(TraceEntry),
    Final { digest: String, steps: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceFile {
    pub header: TraceHeader,
    pub entries: Vec<TraceEntry>,
    pub final_digest: String,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("trace schema {found} is not supported (expected {expected})")]
    SchemaMismatch { found: u32, expected: u32 },
    #[error("trace was recorded for a different program")]
    ProgramMismatch,
    #[error("step {step}: {message}")]
    Divergence { step: u64, message: String },
    #[error("final digest {found} differs from recorded {expected}")]
    DigestMismatch { found: String, expected: String },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// SHA-256 of the program's canonical JSON.
pub fn program_digest(program: &Program) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(program).expect("program serializes")))
}

impl TraceFile {
    pub fn from_run(program: &Program, cfg: &GlobalConfig, seed: Option<u64>) -> Self {
        TraceFile {
            header: TraceHeader {
                schema: TRACE_SCHEMA_VERSION,
                program_digest: program_digest(program),
                seed,
                options: cfg.options(),
            },
            entries: cfg.trace().to_vec(),
            final_digest: cfg.store_digest(),
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |l: &Line| {
            out.push_str(&serde_json::to_string(l).expect("trace serializes"));
            out.push('\n');
        };
        push(&Line::Header(self.header.clone()));
        for e in &self.entries {
            push(&Line::Step(e.clone()));
        }
        push(&Line::Final { digest: self.final_digest.clone(), steps: self.entries.len() });
        out
    }

    pub fn parse(text: &str) -> Result<Self, ReplayError> {
        let mut header = None;
        let mut entries = Vec::new();
        let mut final_digest = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            if header.is_none() {
                // Check the schema before the rest of the header so that a
                // future format is reported as such.
                let v: serde_json::Value = serde_json::from_str(raw)
                    .map_err(|e| ReplayError::Malformed { line, message: e.to_string() })?;
                let found = v.get("schema").and_then(|s| s.as_u64()).unwrap_or(0) as u32;
                if found != TRACE_SCHEMA_VERSION {
                    return Err(ReplayError::SchemaMismatch { found, expected: TRACE_SCHEMA_VERSION });
                }
            }
            let l: Line =
                serde_json::from_str(raw).map_err(|e| ReplayError::Malformed { line, message: e.to_string() })?;
            match (l, header.is_some(), final_digest.is_some()) {
                (Line::Header(h), false, _) => header = Some(h),
                (Line::Step(e), true, false) => entries.push(e),
                (Line::Final { digest, steps }, true, false) => {
                    if steps != entries.len() {
                        return Err(ReplayError::Malformed {
                            line,
                            message: format!("footer counts {steps} steps, file has {}", entries.len()),
                        });
                    }
                    final_digest = Some(digest);
                }
                _ => return Err(ReplayError::Malformed { line, message: "unexpected line".into() }),
            }
        }
        let header = header.ok_or(ReplayError::Malformed { line: 1, message: "missing header".into() })?;
        let final_digest =
            final_digest.ok_or(ReplayError::Malformed { line: text.lines().count(), message: "missing footer".into() })?;
        Ok(TraceFile { header, entries, final_digest })
    }
}

/// Re-executes a recorded trace and checks every step and the final digest.
pub fn replay(program: &Program, text: &str) -> Result<GlobalConfig, ReplayError> {
    let file = TraceFile::parse(text)?;
    if file.header.program_digest != program_digest(program) {
        return Err(ReplayError::ProgramMismatch);
    }
    let mut cfg = GlobalConfig::new(program, file.header.options)?;
    for (i, e) in file.entries.iter().enumerate() {
        let step = i as u64 + 1;
        let t = &e.detail.transition;
        cfg = cfg.apply(t).map_err(|err| ReplayError::Divergence { step, message: err.to_string() })?;
        let got = cfg.trace().last().expect("just pushed");
        if got != e {
            let message = if got.detail.transition != e.detail.transition || got.rule != e.rule {
                format!("recorded `{}` ({}), replay produced `{}` ({})", t, e.rule, got.detail.transition, got.rule)
            } else {
                format!("recorded entry numbered {} with different effects", e.step)
            };
            return Err(ReplayError::Divergence { step, message });
        }
    }
    let found = cfg.store_digest();
    if found != file.final_digest {
        return Err(ReplayError::DigestMismatch { found, expected: file.final_digest });
    }
    Ok(cfg)
}
