//! Servers, context placement and the context maps that clients and
//! servers cache.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use aeon_core::graph::{ContextId, OwnershipGraph};

use crate::migration::Migration;
use crate::scenario::PlacementSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ServerId(pub u32);

impl fmt::Display for ServerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}", self.0)
    }
}

pub type ClientId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClusterError {
    #[error("unknown context `{0}`")]
    UnknownContext(ContextId),
    #[error("unknown server {0}")]
    UnknownServer(ServerId),
    #[error("`{0}` is already migrating")]
    MigrationInFlight(ContextId),
    #[error("`{ctx}` is on {actual}, not {expected}")]
    WrongSource { ctx: ContextId, expected: ServerId, actual: ServerId },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Server {
    /// Contexts whose state lives here.
    pub hosted: BTreeSet<ContextId>,
    /// Engine work units executed in the current policy window.
    pub load: u64,
    /// Work units of the previous full window.
    pub last_load: u64,
    /// Whether the server is part of the cluster right now.
    pub up: bool,
    /// This server's cached context map.
    pub cache: BTreeMap<ContextId, ServerId>,
}

/// Where a client event goes next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "hop", rename_all = "snake_case")]
pub enum Hop {
    Server { server: ServerId },
    EManager,
}

/// Outcome of routing one client event for one context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryPlan {
    pub hops: Vec<Hop>,
    /// Server that ends up holding the request.
    pub destination: ServerId,
    /// The client must refresh its cached entry to `destination`.
    pub refresh_client: bool,
}

impl DeliveryPlan {
    pub fn network_hops(&self) -> usize {
        self.hops.len()
    }
}

/// What a server does with an arriving client event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    /// Hosted here and open: hand to the engine.
    Accept,
    /// The context is moving here; hold the event until the state arrives.
    Defer,
    /// Hosted here but stopped for migration; the client must retry.
    Refuse,
    /// Not here; send on to the server's cached location.
    Forward(ServerId),
    /// Not here and no useful cache entry.
    AskEManager,
}

#[derive(Debug, Clone, Default)]
pub struct ClusterState {
    pub clock: u64,
    pub servers: BTreeMap<ServerId, Server>,
    /// The eManager's map, updated when a migration flips.
    pub authoritative: BTreeMap<ContextId, ServerId>,
    /// Where each context's state currently lives.
    pub host: BTreeMap<ContextId, ServerId>,
    pub client_caches: BTreeMap<ClientId, BTreeMap<ContextId, ServerId>>,
    pub migrations: BTreeMap<ContextId, Migration>,
    pub rng_seed: u64,
}

impl ClusterState {
    /// `n` servers with contexts placed per `placement`; every cache starts
    /// fresh.
    pub fn new(graph: &OwnershipGraph, n: u32, placement: &PlacementSpec, seed: u64) -> Self {
        let mut cs = ClusterState { rng_seed: seed, ..Default::default() };
        for i in 0..n.max(1) {
            cs.servers.insert(ServerId(i), Server { up: true, ..Default::default() });
        }
        for (ctx, s) in place(graph, n.max(1), placement) {
            cs.assign(&ctx, s);
        }
        let map = cs.authoritative.clone();
        for server in cs.servers.values_mut() {
            server.cache = map.clone();
        }
        cs
    }

    fn assign(&mut self, ctx: &ContextId, s: ServerId) {
        self.servers.entry(s).or_insert_with(|| Server { up: true, ..Default::default() }).hosted.insert(ctx.clone());
        self.authoritative.insert(ctx.clone(), s);
        self.host.insert(ctx.clone(), s);
    }

    /// Brings up a new server and returns its id.
    pub fn add_server(&mut self) -> ServerId {
        let id = ServerId(self.servers.keys().next_back().map_or(0, |s| s.0 + 1));
        let cache = self.authoritative.clone();
        self.servers.insert(id, Server { up: true, cache, ..Default::default() });
        id
    }

    /// Servers that are up and either host a context or are receiving one.
    pub fn servers_in_use(&self) -> usize {
        self.servers
            .iter()
            .filter(|(id, s)| s.up && (!s.hosted.is_empty() || self.migrations.values().any(|m| m.dst == **id)))
            .count()
    }

    pub fn host_of(&self, ctx: &ContextId) -> Result<ServerId, ClusterError> {
        self.host.get(ctx).copied().ok_or_else(|| ClusterError::UnknownContext(ctx.clone()))
    }

    /// The client's cached location, filled from the eManager on first use.
    pub fn client_view(&mut self, client: ClientId, ctx: &ContextId) -> Option<ServerId> {
        let auth = self.authoritative.get(ctx).copied()?;
        Some(*self.client_caches.entry(client).or_default().entry(ctx.clone()).or_insert(auth))
    }

    /// How server `s` treats a new client event whose entry context is `ctx`.
    pub fn admission(&self, s: ServerId, ctx: &ContextId) -> Admission {
        if let Some(m) = self.migrations.get(ctx) {
            if m.dst == s && m.flipped() {
                return if self.host.get(ctx) == Some(&s) { Admission::Accept } else { Admission::Defer };
            }
            if m.src == s && m.stopped() {
                return if m.src_knows_dst() { Admission::Forward(m.dst) } else { Admission::Refuse };
            }
        }
        if self.host.get(ctx) == Some(&s) {
            return Admission::Accept;
        }
        match self.servers.get(&s).and_then(|sv| sv.cache.get(ctx)) {
            Some(&next) if next != s => Admission::Forward(next),
            _ => Admission::AskEManager,
        }
    }

    /// Plans delivery of a client event: (i) the cached server takes it,
    /// (ii) that server forwards once along its own cache and the client
    /// refreshes, or (iii) the chain is stale and the eManager resolves it.
    pub fn route_event(&mut self, client: ClientId, ctx: &ContextId) -> Result<DeliveryPlan, ClusterError> {
        let first = self.client_view(client, ctx).ok_or_else(|| ClusterError::UnknownContext(ctx.clone()))?;
        let mut hops = vec![Hop::Server { server: first }];
        let settle = |cs: &Self, s: ServerId| {
            matches!(cs.admission(s, ctx), Admission::Accept | Admission::Defer | Admission::Refuse)
        };
        if settle(self, first) {
            return Ok(DeliveryPlan { hops, destination: first, refresh_client: false });
        }
        if let Admission::Forward(next) = self.admission(first, ctx) {
            hops.push(Hop::Server { server: next });
            if settle(self, next) {
                return Ok(DeliveryPlan { hops, destination: next, refresh_client: true });
            }
        }
        let auth = self.authoritative[ctx];
        hops.push(Hop::EManager);
        hops.push(Hop::Server { server: auth });
        Ok(DeliveryPlan { hops, destination: auth, refresh_client: true })
    }

    /// Records `ctx -> s` in the client's cache.
    pub fn refresh_client(&mut self, client: ClientId, ctx: &ContextId, s: ServerId) {
        self.client_caches.entry(client).or_default().insert(ctx.clone(), s);
    }
}

/// Initial placement, deterministic for a given graph.
pub fn place(graph: &OwnershipGraph, n: u32, spec: &PlacementSpec) -> BTreeMap<ContextId, ServerId> {
    let real: Vec<&ContextId> = graph.nodes().filter(|c| !graph.is_virtual(c)).collect();
    let mut depth: BTreeMap<ContextId, u32> = BTreeMap::new();
    let mut frontier: Vec<ContextId> = real
        .iter()
        .filter(|c| graph.parents(c).map(|p| p.iter().all(|q| graph.is_virtual(q))).unwrap_or(true))
        .map(|c| (*c).clone())
        .collect();
    let mut d = 0;
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for c in frontier {
            if depth.contains_key(&c) {
                continue;
            }
            depth.insert(c.clone(), d);
            if let Ok(children) = graph.children(&c) {
                next.extend(children.iter().filter(|k| !depth.contains_key(*k)).cloned());
            }
        }
        frontier = next;
        d += 1;
    }
    let mut out = BTreeMap::new();
    let mut by_depth: Vec<(&u32, &ContextId)> = depth.iter().map(|(c, d)| (d, c)).collect();
    by_depth.sort();
    let mut rr = 0u32;
    for (d, c) in by_depth {
        let s = if let Some(&s) = spec.explicit.get(c.as_str()) {
            ServerId(s % n)
        } else if *d < spec.spread_depth {
            ServerId(0)
        } else if *d == spec.spread_depth {
            rr += 1;
            ServerId((rr - 1) % n)
        } else {
            graph
                .parents(c)
                .ok()
                .and_then(|ps| ps.iter().find_map(|p| out.get(p).copied()))
                .unwrap_or(ServerId(0))
        };
        out.insert(c.clone(), s);
    }
    out
}
