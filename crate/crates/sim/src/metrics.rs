//! Run metrics and their line-delimited and CSV renderings.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use aeon_core::graph::ContextId;
use aeon_core::lang::Value;

use crate::migration::Migration;
use crate::scenario::LoadShape;

/// One row per tick.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TickSample {
    pub tick: u64,
    pub issued: u64,
    pub completed: u64,
    pub servers: usize,
    pub active_clients: u32,
    pub work: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub count: usize,
    pub mean: f64,
    pub p50: u64,
    pub p95: u64,
    pub p99: u64,
    pub max: u64,
}

impl LatencySummary {
    pub fn from_samples(samples: &[u64]) -> Self {
        if samples.is_empty() {
            return LatencySummary::default();
        }
        let mut v = samples.to_vec();
        v.sort_unstable();
        let pct = |p: f64| v[(((v.len() - 1) as f64) * p).round() as usize];
        LatencySummary {
            count: v.len(),
            mean: v.iter().sum::<u64>() as f64 / v.len() as f64,
            p50: pct(0.50),
            p95: pct(0.95),
            p99: pct(0.99),
            max: *v.last().expect("nonempty"),
        }
    }
}

/// A snapshot event's captured stores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub eid: String,
    pub ctx: ContextId,
    pub tick: u64,
    pub contexts: BTreeMap<ContextId, Value>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Serializability {
    pub checked: bool,
    pub pass: bool,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub ticks: u64,
    pub issued: u64,
    pub completed: u64,
    pub failed: u64,
    /// Events issued but neither committed nor failed when the run ended.
    pub outstanding: u64,
    /// Client events that reached the engine more than once.
    pub duplicates: u64,
    /// Completed client events per tick over the issuing period.
    pub throughput: f64,
    pub latency: LatencySummary,
    pub refusals: u64,
    pub forwards: u64,
    pub emanager_reads: u64,
    pub max_servers: usize,
    pub migrations: usize,
    pub serializability: Serializability,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub summary: Summary,
    pub series: Vec<TickSample>,
    pub migrations: Vec<Migration>,
    pub snapshots: Vec<SnapshotRecord>,
}

impl MetricsReport {
    /// Server count per tick.
    pub fn server_series(&self) -> Vec<usize> {
        self.series.iter().map(|s| s.servers).collect()
    }

    /// `header` first, then one record per tick, migration and snapshot,
    /// then the summary.
    pub fn to_jsonl(&self, header: &impl Serialize) -> String {
        #[derive(Serialize)]
        #[serde(tag = "kind", rename_all = "snake_case")]
        enum Line<'a, H: Serialize> {
            Manifest(&'a H),
            Tick(&'a TickSample),
            Migration(&'a Migration),
            Snapshot(&'a SnapshotRecord),
            Summary(&'a Summary),
        }
        let mut out = String::new();
        let mut push = |l: Line<'_, _>| {
            out.push_str(&serde_json::to_string(&l).expect("metrics serialize"));
            out.push('\n');
        };
        push(Line::Manifest(header));
        for s in &self.series {
            push(Line::Tick(s));
        }
        for m in &self.migrations {
            push(Line::Migration(m));
        }
        for s in &self.snapshots {
            push(Line::Snapshot(s));
        }
        push(Line::Summary(&self.summary));
        out
    }

    /// Per-tick series as CSV; the first line is `# ` plus the header JSON.
    pub fn to_csv(&self, header: &impl Serialize) -> String {
        let mut out = format!("# {}\n", serde_json::to_string(header).expect("header serializes"));
        out.push_str("tick,issued,completed,servers,active_clients,work\n");
        for s in &self.series {
            writeln!(out, "{},{},{},{},{},{}", s.tick, s.issued, s.completed, s.servers, s.active_clients, s.work)
                .expect("string write");
        }
        out
    }
}

/// Pairs of ticks `(t1, t2)` where the server count moved against the
/// load. Within each rising or falling stretch the first `window` ticks are
/// the policy's reaction time; after that, any two ticks at least `window`
/// apart must not go the wrong way.
pub fn shape_violations(series: &[TickSample], load: &LoadShape, window: u64) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < series.len() {
        let Some(dir) = load.rising(series[start].tick) else { return out };
        let mut end = start;
        while end + 1 < series.len() && load.rising(series[end + 1].tick) == Some(dir) {
            end += 1;
        }
        let from = start + window as usize;
        // Best earlier value seen so far: the largest while rising, the
        // smallest while falling.
        let mut best: Option<(usize, usize)> = None;
        for t2 in (from + window as usize)..=end {
            let t1 = t2 - window as usize;
            let v = series[t1].servers;
            best = match best {
                Some((b, _)) if (dir && b >= v) || (!dir && b <= v) => best,
                _ => Some((v, t1)),
            };
            let (b, at) = best.expect("set above");
            let wrong = if dir { series[t2].servers < b } else { series[t2].servers > b };
            if wrong {
                out.push((series[at].tick, series[t2].tick));
            }
        }
        start = end + 1;
    }
    out
}

/// Contexts that started two migrations less than `window` ticks apart.
pub fn rapid_remigrations(migrations: &[Migration], window: u64) -> Vec<ContextId> {
    let mut starts: BTreeMap<&ContextId, Vec<u64>> = BTreeMap::new();
    for m in migrations {
        starts.entry(&m.ctx).or_default().push(m.started);
    }
    starts
        .into_iter()
        .filter(|(_, ts)| {
            let mut ts = ts.clone();
            ts.sort_unstable();
            ts.windows(2).any(|w| w[1] - w[0] < window)
        })
        .map(|(c, _)| c.clone())
        .collect()
}
