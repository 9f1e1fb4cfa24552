//! Scenario files: cluster shape, placement, client workload, scheduled
//! migrations and the elasticity policy, read from TOML.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use aeon_core::graph::ContextId;
use aeon_core::lang::{parse_program, EventSpec, Program, Value};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("scenario: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("program: {0}")]
    Program(String),
    #[error("bad target `{0}`; expected `Context.method` or `Context.method(1, 2)`")]
    Target(String),
    #[error("{0}")]
    Invalid(String),
}

/// A complete simulation setup.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Path of the program, relative to the scenario file.
    #[serde(default)]
    pub program: Option<PathBuf>,
    /// Inline program source; takes precedence over `program`.
    #[serde(default)]
    pub source: Option<String>,
    #[serde(default)]
    pub seed: u64,
    /// Last tick at which clients issue new events.
    pub until: u64,
    /// Extra ticks allowed for in-flight work after `until`.
    #[serde(default = "default_drain")]
    pub drain: u64,
    pub cluster: ClusterSpec,
    #[serde(default)]
    pub workload: WorkloadSpec,
    #[serde(default)]
    pub migrations: Vec<MigrationSpec>,
    #[serde(default)]
    pub snapshots: Vec<SnapshotSpec>,
    #[serde(default)]
    pub policy: Option<PolicySpec>,
    /// Check strict serializability of the logical history at the end.
    #[serde(default)]
    pub check_serializability: bool,
}

fn default_drain() -> u64 {
    5_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    pub servers: u32,
    /// Engine transitions each server executes per tick.
    #[serde(default = "default_cpu")]
    pub cpu: u32,
    /// One-way message latency in ticks.
    #[serde(default = "default_latency")]
    pub latency: u64,
    /// Uniform extra latency in `0..=jitter`.
    #[serde(default)]
    pub jitter: u64,
    /// Delay before the map flips during a migration.
    #[serde(default)]
    pub delta: u64,
    /// Bytes of context state moved per tick.
    #[serde(default = "default_bandwidth")]
    pub bandwidth: u64,
    /// Client wait before retrying a refused event.
    #[serde(default = "default_backoff")]
    pub backoff: u64,
    #[serde(default)]
    pub placement: PlacementSpec,
}

fn default_cpu() -> u32 {
    4
}
fn default_latency() -> u64 {
    2
}
fn default_bandwidth() -> u64 {
    256
}
fn default_backoff() -> u64 {
    1
}

/// Contexts at `spread_depth` (shortest distance from a root) go round
/// robin over the servers; deeper contexts follow their first owner and
/// shallower ones stay on server 0. `explicit` overrides both.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementSpec {
    #[serde(default)]
    pub spread_depth: u32,
    #[serde(default)]
    pub explicit: BTreeMap<String, u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    /// Closed-loop clients; client `i` uses `targets[i % len]`.
    #[serde(default)]
    pub clients: u32,
    /// Ticks between a reply and the client's next event.
    #[serde(default)]
    pub think: u64,
    /// Cap on the number of client events issued.
    #[serde(default)]
    pub max_events: Option<u64>,
    /// Entries like `Room0.play` or `Table{i}.get(3)`; `{i}` expands over
    /// `0..target_count`.
    #[serde(default)]
    pub targets: Vec<String>,
    #[serde(default)]
    pub target_count: Option<u32>,
    #[serde(default)]
    pub load: LoadShape,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec { clients: 0, think: 0, max_events: None, targets: Vec::new(), target_count: None, load: LoadShape::Constant }
    }
}

/// Number of clients active at a tick.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LoadShape {
    #[default]
    Constant,
    /// Linear rise from `low` to `high` over half a period, then back down.
    Triangle { low: u32, high: u32, period: u64 },
}

impl LoadShape {
    pub fn active_clients(&self, clients: u32, tick: u64) -> u32 {
        match *self {
            LoadShape::Constant => clients,
            LoadShape::Triangle { low, high, period } => {
                let period = period.max(2);
                let phase = tick % period;
                let half = period / 2;
                let up = if phase < half { phase } else { period - phase };
                let span = u64::from(high.saturating_sub(low));
                let level = u64::from(low) + span * up / half;
                (level as u32).min(clients)
            }
        }
    }

    /// `true` while the triangle is rising at `tick`.
    pub fn rising(&self, tick: u64) -> Option<bool> {
        match *self {
            LoadShape::Constant => None,
            LoadShape::Triangle { period, .. } => Some(tick % period.max(2) < period.max(2) / 2),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MigrationSpec {
    pub at: u64,
    pub ctx: String,
    /// Destination server; a fresh server when absent.
    #[serde(default)]
    pub to: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotSpec {
    pub at: u64,
    pub ctx: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    /// At most `max_active` recently active contexts per server. A
    /// `storage` server keeps idle contexts only.
    ServerContention {
        max_active: u32,
        window: u64,
        #[serde(default)]
        storage: Option<u32>,
    },
    /// Load is engine work units per window per server.
    ResourceUtilization { lower: u64, upper: u64, threshold: u64, window: u64 },
}

impl PolicySpec {
    pub fn window(&self) -> u64 {
        match *self {
            PolicySpec::ServerContention { window, .. } | PolicySpec::ResourceUtilization { window, .. } => window.max(1),
        }
    }
}

/// A scenario with its program loaded and targets expanded.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub spec: Scenario,
    pub program: Program,
    pub targets: Vec<EventSpec>,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<LoadedScenario, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.into(), source })?;
        Self::from_toml(&text)?.resolve(path.parent().unwrap_or(Path::new(".")))
    }

    /// Loads the program (relative to `base`) and expands the targets.
    pub fn resolve(self, base: &Path) -> Result<LoadedScenario, ScenarioError> {
        let source = match (&self.source, &self.program) {
            (Some(s), _) => s.clone(),
            (None, Some(p)) => {
                let path = base.join(p);
                std::fs::read_to_string(&path).map_err(|source| ScenarioError::Io { path, source })?
            }
            (None, None) => return Err(ScenarioError::Invalid("scenario needs `program` or `source`".into())),
        };
        let program = parse_program(&source).map_err(|e| ScenarioError::Program(e.to_string()))?;
        if self.cluster.servers == 0 {
            return Err(ScenarioError::Invalid("cluster needs at least one server".into()));
        }
        let mut targets = Vec::new();
        for t in &self.workload.targets {
            if t.contains("{i}") {
                let n = self.workload.target_count.ok_or_else(|| {
                    ScenarioError::Invalid(format!("target `{t}` uses {{i}} but `target_count` is missing"))
                })?;
                for i in 0..n {
                    targets.push(parse_target(&t.replace("{i}", &i.to_string()))?);
                }
            } else {
                targets.push(parse_target(t)?);
            }
        }
        if self.workload.clients > 0 && targets.is_empty() {
            return Err(ScenarioError::Invalid("clients need at least one target".into()));
        }
        Ok(LoadedScenario { spec: self, program, targets })
    }
}

/// Parses `Ctx.method` or `Ctx.method(1, -2)`.
pub fn parse_target(s: &str) -> Result<EventSpec, ScenarioError> {
    let bad = || ScenarioError::Target(s.to_string());
    let (head, args) = match s.split_once('(') {
        Some((h, rest)) => {
            let inner = rest.trim_end().strip_suffix(')').ok_or_else(bad)?;
            let args = inner
                .split(',')
                .map(str::trim)
                .filter(|a| !a.is_empty())
                .map(|a| a.parse::<i64>().map(Value::Int).map_err(|_| bad()))
                .collect::<Result<Vec<_>, _>>()?;
            (h, args)
        }
        None => (s, Vec::new()),
    };
    let (ctx, method) = head.trim().split_once('.').ok_or_else(bad)?;
    if ctx.is_empty() || method.is_empty() {
        return Err(bad());
    }
    Ok(EventSpec { target: ContextId::new(ctx), method: method.to_string(), args, tick: 0, span: Default::default() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn targets_parse() {
        let t = parse_target("Room3.move(1, -2)").unwrap();
        assert_eq!(t.target.as_str(), "Room3");
        assert_eq!(t.method, "move");
        assert_eq!(t.args, vec![Value::Int(1), Value::Int(-2)]);
        assert!(parse_target("nomethod").is_err());
        assert!(parse_target("A.b(x)").is_err());
    }

    #[test]
    fn triangle_rises_and_falls() {
        let l = LoadShape::Triangle { low: 4, high: 16, period: 100 };
        assert_eq!(l.active_clients(64, 0), 4);
        assert_eq!(l.active_clients(64, 50), 16);
        assert_eq!(l.active_clients(64, 99), 4);
        assert_eq!(l.active_clients(64, 100), 4);
        assert_eq!(l.rising(10), Some(true));
        assert_eq!(l.rising(60), Some(false));
        assert_eq!(l.active_clients(8, 50), 8);
    }
}
