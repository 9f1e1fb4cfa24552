//! The discrete-event loop.
//!
//! Each tick delivers due messages, lets clients issue events, runs the
//! migration protocol and the policy, and then gives every server `cpu`
//! engine transitions at the contexts it hosts. The logical state is one
//! engine configuration shared by the whole cluster; placement only decides
//! which server pays for a transition and when a context can act. A
//! transition that touches a context on another server makes that context
//! wait one message latency.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use aeon_core::engine::{EngineError, EngineOptions, EventId, GlobalConfig, Outcome, Transition, SNAPSHOT_METHOD};
use aeon_core::graph::ContextId;
use aeon_core::lang::EventSpec;
use aeon_core::verifier::{check_history_digest, check_realtime, LinearOracle};

use crate::cluster::{Admission, ClientId, ClusterError, ClusterState, ServerId};
use crate::metrics::{LatencySummary, MetricsReport, Serializability, SnapshotRecord, Summary, TickSample};
use crate::migration::{Migration, MigrationPhase};
use crate::policy::{self, Dst, ElasticityPolicy, PolicyView};
use crate::scenario::LoadedScenario;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("scenario: {0}")]
    Scenario(String),
}

/// Pseudo client that issues snapshot events.
const SNAPSHOT_CLIENT: ClientId = u32::MAX;

#[derive(Debug, Clone)]
enum Msg {
    /// A client event reaches a server; `forwarded` counts server hops.
    Arrive { req: usize, server: ServerId, forwarded: u32 },
    /// The client re-resolves through the eManager and sends again.
    Retry { req: usize },
    Reply { req: usize },
    CacheRefresh { client: ClientId, ctx: ContextId, server: ServerId },
    StartMigration { ctx: ContextId, to: Option<u32> },
    Snapshot { ctx: ContextId },
    PrepareAtDst { ctx: ContextId },
    PrepareAck { ctx: ContextId },
    StopAtSrc { ctx: ContextId },
    StopAck { ctx: ContextId },
    Flip { ctx: ContextId },
    MigrateAtSrc { ctx: ContextId },
    TransferDone { ctx: ContextId },
}

#[derive(Debug, Clone)]
struct Req {
    client: ClientId,
    spec: EventSpec,
    entry: ContextId,
    issued: u64,
    submitted: u32,
    committed: Option<u64>,
    failed: bool,
    replied: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Client {
    busy: Option<usize>,
    next_at: u64,
}

/// Everything a finished run leaves behind.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub report: MetricsReport,
    pub config: GlobalConfig,
    pub cluster: ClusterState,
}

pub struct Simulation {
    scenario: LoadedScenario,
    cfg: GlobalConfig,
    cs: ClusterState,
    rng: ChaCha8Rng,
    queue: BTreeMap<(u64, u64), Msg>,
    seq: u64,
    reqs: Vec<Req>,
    by_eid: BTreeMap<EventId, usize>,
    clients: Vec<Client>,
    ready_at: BTreeMap<ContextId, u64>,
    policy: Option<Box<dyn ElasticityPolicy>>,
    ctx_work: BTreeMap<ContextId, u64>,
    last_ctx_work: BTreeMap<ContextId, u64>,
    last_moved: BTreeMap<ContextId, u64>,
    finished: Vec<Migration>,
    history_seen: usize,
    series: Vec<TickSample>,
    refusals: u64,
    forwards: u64,
    emanager_reads: u64,
    duplicates: u64,
}

impl Simulation {
    pub fn new(scenario: &LoadedScenario) -> Result<Self, SimError> {
        let spec = &scenario.spec;
        let cfg = GlobalConfig::with_events(&scenario.program, &[], EngineOptions::default())?;
        let cs = ClusterState::new(cfg.graph(), spec.cluster.servers, &spec.cluster.placement, spec.seed);
        for t in &scenario.targets {
            if cfg.graph().class_of(&t.target).is_none() {
                return Err(SimError::Scenario(format!("unknown target context `{}`", t.target)));
            }
        }
        let mut sim = Simulation {
            cfg,
            cs,
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            queue: BTreeMap::new(),
            seq: 0,
            reqs: Vec::new(),
            by_eid: BTreeMap::new(),
            clients: vec![Client::default(); spec.workload.clients as usize],
            ready_at: BTreeMap::new(),
            policy: spec.policy.as_ref().map(policy::from_spec),
            ctx_work: BTreeMap::new(),
            last_ctx_work: BTreeMap::new(),
            last_moved: BTreeMap::new(),
            finished: Vec::new(),
            history_seen: 0,
            series: Vec::new(),
            refusals: 0,
            forwards: 0,
            emanager_reads: 0,
            duplicates: 0,
            scenario: scenario.clone(),
        };
        for m in &spec.migrations {
            sim.post(m.at, Msg::StartMigration { ctx: ContextId::new(&m.ctx), to: m.to });
        }
        for s in &spec.snapshots {
            sim.post(s.at, Msg::Snapshot { ctx: ContextId::new(&s.ctx) });
        }
        Ok(sim)
    }

    pub fn cluster(&self) -> &ClusterState {
        &self.cs
    }

    pub fn config(&self) -> &GlobalConfig {
        &self.cfg
    }

    fn post(&mut self, at: u64, msg: Msg) {
        self.seq += 1;
        self.queue.insert((at, self.seq), msg);
    }

    fn latency(&mut self) -> u64 {
        let c = &self.scenario.spec.cluster;
        c.latency + if c.jitter > 0 { self.rng.gen_range(0..=c.jitter) } else { 0 }
    }

    fn now(&self) -> u64 {
        self.cs.clock
    }

    fn host(&self, ctx: &ContextId) -> ServerId {
        self.cs.host.get(ctx).copied().unwrap_or(ServerId(0))
    }

    /// Starts migrating `ctx` to `dst` now.
    pub fn migrate(&mut self, ctx: &ContextId, dst: ServerId) -> Result<(), SimError> {
        if self.cs.migrations.contains_key(ctx) {
            return Err(ClusterError::MigrationInFlight(ctx.clone()).into());
        }
        let src = self.cs.host_of(ctx)?;
        if !self.cs.servers.contains_key(&dst) {
            return Err(ClusterError::UnknownServer(dst).into());
        }
        if src == dst {
            return Ok(());
        }
        let now = self.now();
        self.cs.migrations.insert(ctx.clone(), Migration::new(ctx.clone(), src, dst, now));
        self.cs.servers.get_mut(&dst).expect("checked").up = true;
        self.last_moved.insert(ctx.clone(), now);
        let l = self.latency();
        self.post(now + l, Msg::PrepareAtDst { ctx: ctx.clone() });
        Ok(())
    }

    fn issue(&mut self, client: ClientId, spec: EventSpec) -> Result<(), SimError> {
        let entry = self.cfg.graph().dominator(&spec.target).map_err(EngineError::from)?.clone();
        let now = self.now();
        let req = self.reqs.len();
        self.reqs.push(Req {
            client,
            spec,
            entry: entry.clone(),
            issued: now,
            submitted: 0,
            committed: None,
            failed: false,
            replied: None,
        });
        let server = if client == SNAPSHOT_CLIENT {
            self.cs.authoritative.get(&entry).copied().unwrap_or(ServerId(0))
        } else {
            self.cs.client_view(client, &entry).unwrap_or(ServerId(0))
        };
        let l = self.latency();
        self.post(now + l, Msg::Arrive { req, server, forwarded: 0 });
        if let Some(c) = self.clients.get_mut(client as usize) {
            c.busy = Some(req);
        }
        Ok(())
    }

    fn submit(&mut self, req: usize) -> Result<(), SimError> {
        let r = &mut self.reqs[req];
        r.submitted += 1;
        if r.submitted > 1 {
            self.duplicates += 1;
            return Ok(());
        }
        let eid = EventId::new(format!("R{req}"));
        self.by_eid.insert(eid.clone(), req);
        let spec = r.spec.clone();
        self.cfg.submit_as(eid, &spec)?;
        Ok(())
    }

    fn handle(&mut self, msg: Msg) -> Result<(), SimError> {
        let now = self.now();
        match msg {
            Msg::Arrive { req, server, forwarded } => {
                let entry = self.reqs[req].entry.clone();
                match self.cs.admission(server, &entry) {
                    Admission::Accept => self.submit(req)?,
                    Admission::Defer => {
                        self.cs.migrations.get_mut(&entry).expect("deferring migration").queued_at_dst.push(req as u64)
                    }
                    Admission::Refuse => {
                        self.refusals += 1;
                        self.cs.migrations.get_mut(&entry).expect("refusing migration").refusals.push(now);
                        let l = self.latency();
                        let backoff = self.scenario.spec.cluster.backoff;
                        self.post(now + l + backoff, Msg::Retry { req });
                    }
                    Admission::Forward(next) if forwarded == 0 => {
                        self.forwards += 1;
                        let l = self.latency();
                        self.post(now + l, Msg::Arrive { req, server: next, forwarded: 1 });
                        let client = self.reqs[req].client;
                        let l = self.latency();
                        self.post(now + l, Msg::CacheRefresh { client, ctx: entry, server: next });
                    }
                    Admission::Forward(_) | Admission::AskEManager => {
                        self.emanager_reads += 1;
                        let auth = self.cs.authoritative[&entry];
                        let l = self.latency() + self.latency();
                        self.post(now + l, Msg::Arrive { req, server: auth, forwarded: 0 });
                        let client = self.reqs[req].client;
                        self.post(now + l, Msg::CacheRefresh { client, ctx: entry, server: auth });
                    }
                }
            }
            Msg::Retry { req } => {
                self.emanager_reads += 1;
                let entry = self.reqs[req].entry.clone();
                let auth = self.cs.authoritative[&entry];
                let client = self.reqs[req].client;
                self.cs.refresh_client(client, &entry, auth);
                let l = self.latency() + self.latency();
                self.post(now + l, Msg::Arrive { req, server: auth, forwarded: 0 });
            }
            Msg::Reply { req } => {
                let r = &mut self.reqs[req];
                r.replied = Some(now);
                let think = self.scenario.spec.workload.think;
                if let Some(c) = self.clients.get_mut(r.client as usize) {
                    c.busy = None;
                    c.next_at = now + think;
                }
            }
            Msg::CacheRefresh { client, ctx, server } => {
                if client != SNAPSHOT_CLIENT {
                    self.cs.refresh_client(client, &ctx, server);
                }
            }
            Msg::StartMigration { ctx, to } => {
                let dst = match to {
                    Some(s) => {
                        let s = ServerId(s);
                        if !self.cs.servers.contains_key(&s) {
                            return Err(ClusterError::UnknownServer(s).into());
                        }
                        s
                    }
                    None => self.cs.add_server(),
                };
                self.migrate(&ctx, dst)?;
            }
            Msg::Snapshot { ctx } => {
                let spec = EventSpec { target: ctx, method: SNAPSHOT_METHOD.into(), args: vec![], tick: 0, span: Default::default() };
                self.issue(SNAPSHOT_CLIENT, spec)?;
            }
            Msg::PrepareAtDst { ctx } => {
                let dst = self.cs.migrations[&ctx].dst;
                self.cs.servers.get_mut(&dst).expect("dst").cache.insert(ctx.clone(), dst);
                let l = self.latency();
                self.post(now + l, Msg::PrepareAck { ctx });
            }
            Msg::PrepareAck { ctx } => {
                self.cs.migrations.get_mut(&ctx).expect("in flight").advance(MigrationPhase::Stop);
                let l = self.latency();
                self.post(now + l, Msg::StopAtSrc { ctx });
            }
            Msg::StopAtSrc { ctx } => {
                self.cs.migrations.get_mut(&ctx).expect("in flight").stopped_at = Some(now);
                let l = self.latency();
                self.post(now + l, Msg::StopAck { ctx });
            }
            Msg::StopAck { ctx } => {
                let delta = self.scenario.spec.cluster.delta;
                let m = self.cs.migrations.get_mut(&ctx).expect("in flight");
                m.stop_acked_at = Some(now);
                m.advance(MigrationPhase::Remap);
                m.delta_deadline = Some(now + delta);
                self.post(now + delta, Msg::Flip { ctx });
            }
            Msg::Flip { ctx } => {
                let m = self.cs.migrations.get_mut(&ctx).expect("in flight");
                m.flipped_at = Some(now);
                let dst = m.dst;
                self.cs.authoritative.insert(ctx.clone(), dst);
                let l = self.latency();
                self.post(now + l, Msg::MigrateAtSrc { ctx });
            }
            Msg::MigrateAtSrc { ctx } => {
                let ahead: Vec<EventId> = self
                    .cfg
                    .context(&ctx)
                    .map(|c| c.queue.iter().map(|r| r.eid().clone()).collect())
                    .unwrap_or_default();
                let m = self.cs.migrations.get_mut(&ctx).expect("in flight");
                m.advance(MigrationPhase::Transfer);
                m.migrate_queued_at = Some(now);
                m.ahead = ahead;
                let (src, dst) = (m.src, m.dst);
                self.cs.servers.get_mut(&src).expect("src").cache.insert(ctx, dst);
            }
            Msg::TransferDone { ctx } => {
                let mut m = self.cs.migrations.remove(&ctx).expect("in flight");
                m.advance(MigrationPhase::Done);
                m.done_at = Some(now);
                self.cs.servers.get_mut(&m.src).expect("src").hosted.remove(&ctx);
                self.cs.servers.get_mut(&m.dst).expect("dst").hosted.insert(ctx.clone());
                self.cs.host.insert(ctx.clone(), m.dst);
                for req in std::mem::take(&mut m.queued_at_dst) {
                    self.submit(req as usize)?;
                }
                self.finished.push(m);
            }
        }
        Ok(())
    }

    /// Starts the transfer of every migration whose `migrate_c` has reached
    /// the head of its context.
    fn start_transfers(&mut self) {
        let now = self.now();
        let bandwidth = self.scenario.spec.cluster.bandwidth.max(1);
        let mut done = Vec::new();
        for (ctx, m) in self.cs.migrations.iter_mut() {
            if !m.src_knows_dst() || m.transfer_started_at.is_some() {
                continue;
            }
            let Some(c) = self.cfg.context(ctx) else { continue };
            if !c.activations.is_empty() || c.queue.iter().any(|r| m.ahead.contains(r.eid())) {
                continue;
            }
            let bytes = serde_json::to_vec(&c.store).map(|v| v.len() as u64).unwrap_or(0);
            m.transfer_started_at = Some(now);
            m.transfer_ticks = bytes.div_ceil(bandwidth).max(1);
            done.push((now + m.transfer_ticks, ctx.clone()));
        }
        for (at, ctx) in done {
            self.post(at, Msg::TransferDone { ctx });
        }
    }

    /// Whether migration state lets `t` run at `site` now.
    fn migration_allows(&self, t: &Transition, site: &ContextId) -> bool {
        let Some(m) = self.cs.migrations.get(site) else { return true };
        if matches!(t, Transition::Dispatch { .. } | Transition::Commit { .. }) {
            return true;
        }
        if m.transferring() {
            return false;
        }
        if !m.stopped() {
            return true;
        }
        let ctx = self.cfg.context(site);
        match t {
            Transition::Activate { .. } => {
                m.src_knows_dst()
                    && ctx.and_then(|c| c.queue.first()).is_some_and(|head| m.ahead.contains(head.eid()))
            }
            Transition::AutoLock { eid, call } => {
                let newly_locks = self
                    .cfg
                    .pending_calls()
                    .iter()
                    .find(|p| &p.eid == eid && p.id == *call)
                    .is_some_and(|p| !p.path.is_empty() && !ctx.is_some_and(|c| c.holds(eid)));
                !newly_locks
            }
            _ => true,
        }
    }

    /// Runs engine transitions for one tick within each server's budget.
    fn execute(&mut self) -> Result<u64, SimError> {
        let now = self.now();
        let cpu = self.scenario.spec.cluster.cpu;
        let mut budget: BTreeMap<ServerId, u32> = self.cs.servers.keys().map(|s| (*s, cpu)).collect();
        let mut work = 0;
        loop {
            let candidates: Vec<(Transition, ContextId, ServerId)> = self
                .cfg
                .enabled()
                .into_iter()
                .filter_map(|t| {
                    let site = self.cfg.site(&t)?;
                    let server = self.host(&site);
                    let ok = budget.get(&server).is_some_and(|b| *b > 0)
                        && self.ready_at.get(&site).is_none_or(|r| *r <= now)
                        && self.migration_allows(&t, &site);
                    ok.then_some((t, site, server))
                })
                .collect();
            if candidates.is_empty() {
                break;
            }
            let (t, site, server) = candidates[self.rng.gen_range(0..candidates.len())].clone();
            let touched = self.cfg.apply_mut(&t)?.detail.touched.clone();
            *budget.get_mut(&server).expect("budgeted") -= 1;
            work += 1;
            *self.ctx_work.entry(site.clone()).or_default() += 1;
            self.cs.servers.get_mut(&server).expect("server").load += 1;
            for y in touched {
                if self.host(&y) != server {
                    let l = self.latency();
                    let r = self.ready_at.entry(y).or_default();
                    *r = (*r).max(now + l);
                }
            }
            self.collect_history();
        }
        self.cfg.clear_trace();
        Ok(work)
    }

    fn collect_history(&mut self) {
        let now = self.now();
        while self.history_seen < self.cfg.history().len() {
            let h = &self.cfg.history()[self.history_seen];
            self.history_seen += 1;
            let Some(&req) = self.by_eid.get(&h.eid) else { continue };
            let r = &mut self.reqs[req];
            match h.outcome {
                Outcome::Committed => r.committed = Some(now),
                Outcome::Failed { .. } => r.failed = true,
            }
            let l = self.latency();
            self.post(now + l, Msg::Reply { req });
        }
    }

    fn policy_step(&mut self) -> Result<(), SimError> {
        let Some(window) = self.policy.as_ref().map(|p| p.window()) else { return Ok(()) };
        let now = self.now();
        if now == 0 || !now.is_multiple_of(window) {
            return Ok(());
        }
        self.last_ctx_work = std::mem::take(&mut self.ctx_work);
        for s in self.cs.servers.values_mut() {
            s.last_load = std::mem::take(&mut s.load);
        }
        let view = PolicyView {
            now,
            window,
            hosted: self.cs.servers.iter().filter(|(_, s)| s.up).map(|(id, s)| (*id, s.hosted.clone())).collect(),
            server_load: self.cs.servers.iter().map(|(id, s)| (*id, s.last_load)).collect(),
            ctx_load: self.last_ctx_work.clone(),
            last_moved: self.last_moved.clone(),
            migrating: self.cs.migrations.keys().cloned().collect(),
        };
        let moves = self.policy.as_mut().expect("checked").decide(&view);
        let mut fresh: BTreeMap<u32, ServerId> = BTreeMap::new();
        for mv in moves {
            if self.cs.migrations.contains_key(&mv.ctx) || self.cs.host.get(&mv.ctx) != Some(&mv.src) {
                continue;
            }
            let dst = match mv.dst {
                Dst::Existing(s) => s,
                Dst::Fresh(n) => match fresh.get(&n) {
                    Some(s) => *s,
                    None => {
                        let s = self.cs.add_server();
                        fresh.insert(n, s);
                        s
                    }
                },
            };
            self.migrate(&mv.ctx, dst)?;
        }
        // Servers left with nothing to host leave the cluster.
        let receiving: BTreeSet<ServerId> = self.cs.migrations.values().map(|m| m.dst).collect();
        for (id, s) in self.cs.servers.iter_mut() {
            if s.hosted.is_empty() && !receiving.contains(id) {
                s.up = false;
            }
        }
        Ok(())
    }

    fn clients_step(&mut self) -> Result<u64, SimError> {
        let spec = &self.scenario.spec;
        let now = self.now();
        if now > spec.until || self.scenario.targets.is_empty() {
            return Ok(0);
        }
        let active = spec.workload.load.active_clients(spec.workload.clients, now);
        let cap = spec.workload.max_events;
        let mut issued = 0;
        for c in 0..active.min(self.clients.len() as u32) {
            let cl = self.clients[c as usize];
            if cl.busy.is_some() || cl.next_at > now {
                continue;
            }
            let client_events = self.reqs.iter().filter(|r| r.client != SNAPSHOT_CLIENT).count() as u64;
            if cap.is_some_and(|m| client_events >= m) {
                break;
            }
            let spec = self.scenario.targets[c as usize % self.scenario.targets.len()].clone();
            self.issue(c, spec)?;
            issued += 1;
        }
        Ok(issued)
    }

    fn quiescent(&self) -> bool {
        self.reqs.iter().all(|r| r.replied.is_some()) && self.cs.migrations.is_empty() && self.cfg.is_quiescent()
    }

    /// Advances one tick.
    pub fn step(&mut self) -> Result<(), SimError> {
        let now = self.now();
        while let Some(entry) = self.queue.first_entry() {
            if entry.key().0 > now {
                break;
            }
            let msg = entry.remove();
            self.handle(msg)?;
        }
        let issued = self.clients_step()?;
        self.policy_step()?;
        self.start_transfers();
        let work = self.execute()?;
        let completed = self.reqs.iter().filter(|r| r.committed == Some(now) && r.client != SNAPSHOT_CLIENT).count() as u64;
        let spec = &self.scenario.spec;
        self.series.push(TickSample {
            tick: now,
            issued,
            completed,
            servers: self.cs.servers_in_use(),
            active_clients: if now <= spec.until { spec.workload.load.active_clients(spec.workload.clients, now) } else { 0 },
            work,
        });
        self.cs.clock += 1;
        Ok(())
    }

    /// Runs to `until`, then drains in-flight work.
    pub fn run(mut self) -> Result<SimOutcome, SimError> {
        let spec = self.scenario.spec.clone();
        while self.now() <= spec.until {
            self.step()?;
        }
        let limit = spec.until + spec.drain;
        while self.now() <= limit && !(self.quiescent() && self.queue.is_empty()) {
            self.step()?;
        }
        let report = self.report(spec.check_serializability)?;
        Ok(SimOutcome { report, config: self.cfg, cluster: self.cs })
    }

    fn report(&self, check: bool) -> Result<MetricsReport, SimError> {
        let spec = &self.scenario.spec;
        let clients: Vec<&Req> = self.reqs.iter().filter(|r| r.client != SNAPSHOT_CLIENT).collect();
        let completed = clients.iter().filter(|r| r.committed.is_some()).count() as u64;
        let failed = clients.iter().filter(|r| r.failed).count() as u64;
        let during = clients.iter().filter(|r| r.committed.is_some_and(|t| t <= spec.until)).count();
        let latencies: Vec<u64> = clients.iter().filter_map(|r| Some(r.replied? - r.issued)).collect();
        let mut migrations = self.finished.clone();
        migrations.extend(self.cs.migrations.values().cloned());
        migrations.sort_by_key(|m| (m.started, m.ctx.clone()));
        let serializability = if check {
            let history = self.cfg.history();
            let mut s = Serializability { checked: true, pass: true, detail: None };
            if let Some(v) = check_realtime(history).first() {
                s.pass = false;
                s.detail = Some(format!("real-time order: {} before {}", v.first, v.second));
            } else {
                let mut oracle = LinearOracle::new(&self.scenario.program)?;
                if let Err(e) = check_history_digest(history, &self.cfg.store_digest(), &mut oracle) {
                    s.pass = false;
                    s.detail = Some(e.to_string());
                }
            }
            s
        } else {
            Serializability::default()
        };
        let snapshots = self
            .cfg
            .history()
            .iter()
            .filter(|h| h.method == SNAPSHOT_METHOD && matches!(h.outcome, Outcome::Committed))
            .map(|h| SnapshotRecord {
                eid: h.eid.to_string(),
                ctx: h.target.clone(),
                tick: self.by_eid.get(&h.eid).and_then(|r| self.reqs[*r].committed).unwrap_or_default(),
                contexts: h.snapshot.clone(),
            })
            .collect();
        let summary = Summary {
            ticks: self.now(),
            issued: clients.len() as u64,
            completed,
            failed,
            outstanding: clients.len() as u64 - completed - failed,
            duplicates: self.duplicates,
            throughput: during as f64 / (spec.until + 1) as f64,
            latency: LatencySummary::from_samples(&latencies),
            refusals: self.refusals,
            forwards: self.forwards,
            emanager_reads: self.emanager_reads,
            max_servers: self.series.iter().map(|s| s.servers).max().unwrap_or(0),
            migrations: migrations.len(),
            serializability,
        };
        Ok(MetricsReport { summary, series: self.series.clone(), migrations, snapshots })
    }
}

/// Runs a loaded scenario to completion.
pub fn run_sim(scenario: &LoadedScenario) -> Result<SimOutcome, SimError> {
    Simulation::new(scenario)?.run()
}
