//! Enabled transitions and their effect on a configuration.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::trace::{TraceDetail, TraceEntry};
use super::*;
use crate::lang::intra::{bind_params, erase_emit, is_blocked, resume_with_return, step_intra, Host, IntraConfig, Label};
use crate::lang::OwnershipOp;

/// One scheduler choice.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "transition", rename_all = "snake_case")]
pub enum Transition {
    /// Send a client or nested event to its dominator or target.
    Dispatch { eid: EventId },
    /// Admit the request at the head of a context queue.
    Activate { ctx: ContextId },
    /// Move a request of an event already active at `ctx` to the front.
    Promote { ctx: ContextId, index: usize },
    /// Run one activation up to its next synchronization label.
    Lift { ctx: ContextId, eid: EventId, activation: u32 },
    /// Take the next lock of an auto-lock path, or deliver the call.
    AutoLock { eid: EventId, call: u32 },
    /// Release every lock of a finished event.
    Commit { eid: EventId },
}

impl Transition {
    /// Event the transition acts for, when it is known without the config.
    pub fn eid(&self) -> Option<&EventId> {
        match self {
            Transition::Dispatch { eid }
            | Transition::Lift { eid, .. }
            | Transition::AutoLock { eid, .. }
            | Transition::Commit { eid } => Some(eid),
            Transition::Activate { .. } | Transition::Promote { .. } => None,
        }
    }
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transition::Dispatch { eid } => write!(f, "dispatch({eid})"),
            Transition::Activate { ctx } => write!(f, "activate({ctx})"),
            Transition::Promote { ctx, index } => write!(f, "promote({ctx}, {index})"),
            Transition::Lift { ctx, eid, activation } => write!(f, "lift({ctx}, {eid}#{activation})"),
            Transition::AutoLock { eid, call } => write!(f, "auto_lock({eid}, {call})"),
            Transition::Commit { eid } => write!(f, "commit({eid})"),
        }
    }
}

struct CtxHost<'a> {
    program: &'a Program,
    graph: &'a OwnershipGraph,
    me: &'a ContextId,
}

impl Host for CtxHost<'_> {
    fn program(&self) -> &Program {
        self.program
    }

    fn self_id(&self) -> &ContextId {
        self.me
    }

    fn class_of(&self, c: &ContextId) -> Option<&str> {
        self.graph.class_of(c)
    }

    fn children(&self) -> Vec<ContextId> {
        self.graph.children(self.me).map(|s| s.iter().cloned().collect()).unwrap_or_default()
    }
}

/// Bookkeeping for the trace entry of one applied transition.
struct Effect {
    rule: &'static str,
    ctx: Option<ContextId>,
    eid: Option<EventId>,
    touched: Vec<ContextId>,
    note: Option<String>,
}

impl Effect {
    fn new(rule: &'static str, ctx: Option<&ContextId>, eid: &EventId) -> Self {
        Effect { rule, ctx: ctx.cloned(), eid: Some(eid.clone()), touched: ctx.into_iter().cloned().collect(), note: None }
    }

    fn touch(&mut self, c: &ContextId) {
        if !self.touched.contains(c) {
            self.touched.push(c.clone());
        }
    }
}

impl GlobalConfig {
    /// Every transition the scheduler may pick, in a fixed order.
    pub fn enabled(&self) -> Vec<Transition> {
        let mut out = Vec::new();
        for eid in self.dispatchable() {
            out.push(Transition::Dispatch { eid: eid.clone() });
        }
        for (id, c) in &self.contexts {
            if let Some(head) = c.queue.first() {
                if admits(c, head) {
                    out.push(Transition::Activate { ctx: id.clone() });
                }
            }
        }
        for (id, c) in &self.contexts {
            for index in 1..c.queue.len() {
                if promotable(c, index) {
                    out.push(Transition::Promote { ctx: id.clone(), index });
                }
            }
        }
        for (id, c) in &self.contexts {
            for a in &c.activations {
                if let Activation::Running { eid, id: aid, stmt, .. } = a {
                    if !is_blocked(stmt) {
                        out.push(Transition::Lift { ctx: id.clone(), eid: eid.clone(), activation: *aid });
                    }
                }
            }
        }
        for pc in &self.pending_calls {
            if self.can_advance(pc) {
                out.push(Transition::AutoLock { eid: pc.eid.clone(), call: pc.id });
            }
        }
        for eid in self.events.keys() {
            if self.committable(eid) {
                out.push(Transition::Commit { eid: eid.clone() });
            }
        }
        out
    }

    /// Eids whose dispatch is currently allowed.
    fn dispatchable(&self) -> Vec<&EventId> {
        if self.options.linear {
            if self.events.is_empty() && self.pending_calls.is_empty() {
                return self.undispatched.first().map(|u| &u.eid).into_iter().collect();
            }
            return Vec::new();
        }
        let min_tick = self.undispatched.iter().filter(|u| u.creator.is_none()).map(|u| u.tick).min();
        let mut seen_creators = Vec::new();
        let mut out = Vec::new();
        for u in &self.undispatched {
            match &u.creator {
                None if Some(u.tick) == min_tick => out.push(&u.eid),
                None => {}
                Some(c) if !seen_creators.contains(&c) => {
                    seen_creators.push(c);
                    out.push(&u.eid);
                }
                Some(_) => {}
            }
        }
        out
    }

    fn holds(&self, ctx: &ContextId, eid: &EventId) -> bool {
        self.contexts.get(ctx).is_some_and(|c| c.holds(eid))
    }

    fn can_advance(&self, pc: &PendingCall) -> bool {
        match pc.path.first() {
            Some(next) => {
                let c = &self.contexts[next];
                c.holds(&pc.eid)
                    || match pc.request.mode() {
                        AccessMode::Ro => !c.has_ex(),
                        AccessMode::Ex => c.activations.is_empty(),
                    }
            }
            None => pc.gate.as_ref().is_none_or(|g| self.holds(g, &pc.eid)),
        }
    }

    fn committable(&self, eid: &EventId) -> bool {
        let info = &self.events[eid];
        info.entry_returned
            && (!info.early || self.holds(&info.dominator, eid))
            && !self.pending_calls.iter().any(|p| &p.eid == eid)
            && self.contexts.values().all(|c| {
                !c.queue.iter().any(|r| r.eid() == eid)
                    && !c.activations.iter().any(|a| matches!(a, Activation::Running { eid: e, .. } if e == eid))
            })
    }

    /// Applies one transition, returning the successor configuration.
    pub fn apply(&self, t: &Transition) -> Result<GlobalConfig, EngineError> {
        let mut next = self.clone();
        next.apply_mut(t)?;
        Ok(next)
    }

    /// Applies one transition in place and returns its trace entry. After an
    /// error other than a stale choice the configuration may be partially
    /// updated and should be discarded.
    pub fn apply_mut(&mut self, t: &Transition) -> Result<&TraceEntry, EngineError> {
        self.clock += 1;
        let effect = match t {
            Transition::Dispatch { eid } => self.do_dispatch(eid),
            Transition::Activate { ctx } => self.do_activate(ctx),
            Transition::Promote { ctx, index } => self.do_promote(ctx, *index),
            Transition::Lift { ctx, eid, activation } => self.do_lift(ctx, eid, *activation),
            Transition::AutoLock { eid, call } => self.do_auto_lock(eid, *call),
            Transition::Commit { eid } => self.do_commit(eid),
        };
        let effect = match effect {
            Ok(e) => e,
            Err(e) => {
                self.clock -= 1;
                return Err(e);
            }
        };
        let entry = TraceEntry {
            step: self.clock,
            rule: effect.rule.to_string(),
            ctx: effect.ctx,
            eid: effect.eid,
            detail: TraceDetail { transition: t.clone(), touched: effect.touched, note: effect.note },
        };
        self.trace.push(entry);
        Ok(self.trace.last().expect("just pushed"))
    }

    fn stale(t: impl fmt::Display) -> EngineError {
        EngineError::StaleChoice(t.to_string())
    }

    fn ctx_mut(&mut self, id: &ContextId) -> &mut ContextState {
        Arc::make_mut(self.contexts.entry(id.clone()).or_default())
    }

    fn do_dispatch(&mut self, eid: &EventId) -> Result<Effect, EngineError> {
        if !self.dispatchable().contains(&eid) {
            return Err(Self::stale(format!("dispatch({eid})")));
        }
        let pos = self.undispatched.iter().position(|u| &u.eid == eid).expect("dispatchable");
        let u = self.undispatched.remove(pos);
        let class = self.graph.class_of(&u.target).ok_or_else(|| EngineError::UnknownContext(u.target.clone()))?;
        let mode = self
            .program
            .method(class, &u.method)
            .ok_or_else(|| EngineError::UnknownMethod { class: class.to_string(), method: u.method.clone() })?
            .mode;
        let dominator =
            if self.options.unsafe_no_dominator { u.target.clone() } else { self.graph.dominator(&u.target)?.clone() };
        let early = self.options.opt_unshared_start && dominator != u.target;
        let call = Request::Call {
            eid: eid.clone(),
            method: u.method.clone(),
            args: u.args.clone(),
            decorator: Decorator::Event,
            mode,
            reply_to: None,
        };
        let mut effect;
        if dominator == u.target {
            effect = Effect::new("event_call_unshared", Some(&u.target), eid);
            self.ctx_mut(&u.target).queue.push(call);
        } else {
            effect = Effect::new("event_call_shared", Some(&dominator), eid);
            let marker = Request::LubMarker {
                eid: eid.clone(),
                method: u.method.clone(),
                args: u.args.clone(),
                target: u.target.clone(),
                mode,
                forward: !early,
            };
            self.ctx_mut(&dominator).queue.push(marker);
            if early {
                self.ctx_mut(&u.target).queue.push(call);
                effect.touch(&u.target);
            }
        }
        self.issue_ticks.insert(eid.clone(), self.clock);
        self.events.insert(
            eid.clone(),
            EventInfo {
                target: u.target,
                method: u.method,
                args: u.args,
                mode,
                creator: u.creator,
                dominator,
                entry_returned: false,
                next_activation: 0,
                nested: Vec::new(),
                changed_ownership: false,
                early,
                snapshot: BTreeMap::new(),
            },
        );
        Ok(effect)
    }

    fn do_activate(&mut self, ctx: &ContextId) -> Result<Effect, EngineError> {
        let head = match self.contexts.get(ctx).and_then(|c| c.queue.first()) {
            Some(h) if admits(&self.contexts[ctx], h) => h.clone(),
            _ => return Err(Self::stale(format!("activate({ctx})"))),
        };
        self.ctx_mut(ctx).queue.remove(0);
        match head {
            Request::LubMarker { eid, method, args, target, mode, forward } => {
                let rule = if mode == AccessMode::Ex { "lub_lock_exclusive" } else { "lub_lock_readonly" };
                let mut effect = Effect::new(rule, Some(ctx), &eid);
                self.ctx_mut(ctx).insert_activation(Activation::Placeholder { eid: eid.clone(), mode });
                if forward {
                    let call = Request::Call { eid, method, args, decorator: Decorator::Event, mode, reply_to: None };
                    self.ctx_mut(&target).queue.push(call);
                    effect.touch(&target);
                }
                Ok(effect)
            }
            Request::Call { eid, method, args, decorator, mode, reply_to } => {
                let rule = if mode == AccessMode::Ex { "exclusive_access" } else { "readonly_access" };
                let mut effect = Effect::new(rule, Some(ctx), &eid);
                let class = self.graph.class_of(ctx).unwrap_or_default().to_string();
                let def = self.program.method(&class, &method).cloned();
                let lenv = match def.as_ref() {
                    None => Err(format!("class `{class}` has no method `{method}`")),
                    Some(d) => bind_params(d, &args).map_err(|e| e.to_string()),
                };
                let snap = if method == SNAPSHOT_METHOD { Some(self.capture_state(ctx)) } else { None };
                match (lenv, snap) {
                    (Err(reason), _) | (Ok(_), Some(Err(reason))) => {
                        effect.note = Some(reason.clone());
                        self.abort(&eid, reason, &mut effect);
                    }
                    (Ok(lenv), snap) => {
                        let info = self.events.get_mut(&eid).ok_or_else(|| {
                            EngineError::Protocol(format!("request of finished event `{eid}` at `{ctx}`"))
                        })?;
                        if let Some(Ok(Some(v))) = snap {
                            info.snapshot.insert(ctx.clone(), v);
                        }
                        let id = info.next_activation;
                        info.next_activation += 1;
                        let stmt = def.expect("bound").body.clone();
                        self.ctx_mut(ctx).insert_activation(Activation::Running {
                            eid,
                            mode,
                            decorator,
                            id,
                            lenv,
                            stmt,
                            reply_to,
                        });
                    }
                }
                Ok(effect)
            }
        }
    }

    /// Value recorded for `ctx` by a snapshot; `None` skips the context.
    fn capture_state(&self, ctx: &ContextId) -> Result<Option<Value>, String> {
        let c = &self.contexts[ctx];
        let class = self.graph.class_of(ctx).unwrap_or_default();
        let Some(hook) = self.program.method(class, STATE_HOOK) else {
            return Ok(Some(Value::Record(c.store.clone())));
        };
        if !hook.params.is_empty() || hook.mode != AccessMode::Ro {
            return Err(format!("`{class}.{STATE_HOOK}` must be a readonly method without parameters"));
        }
        let cfg = IntraConfig {
            store: c.store.clone(),
            genv: c.genv.clone(),
            lenv: Env::new(),
            stmt: hook.body.clone(),
            am: AccessMode::Ro,
        };
        let host = CtxHost { program: &self.program, graph: &self.graph, me: ctx };
        match step_intra(cfg, &host) {
            Ok((_, Label::Ret { value: Value::Unit })) => Ok(None),
            Ok((_, Label::Ret { value })) => Ok(Some(value)),
            Ok((_, other)) => Err(format!("`{class}.{STATE_HOOK}` must not call other contexts (got {other:?})")),
            Err(e) => Err(e.to_string()),
        }
    }

    fn do_promote(&mut self, ctx: &ContextId, index: usize) -> Result<Effect, EngineError> {
        if !self.contexts.get(ctx).is_some_and(|c| index < c.queue.len() && index > 0 && promotable(c, index)) {
            return Err(Self::stale(format!("promote({ctx}, {index})")));
        }
        let c = self.ctx_mut(ctx);
        let r = c.queue.remove(index);
        let eid = r.eid().clone();
        c.queue.insert(0, r);
        Ok(Effect::new("call_promotion", Some(ctx), &eid))
    }

    fn do_auto_lock(&mut self, eid: &EventId, call: u32) -> Result<Effect, EngineError> {
        let pos = self
            .pending_calls
            .iter()
            .position(|p| &p.eid == eid && p.id == call && self.can_advance(p))
            .ok_or_else(|| Self::stale(format!("auto_lock({eid}, {call})")))?;
        let mut pc = self.pending_calls.remove(pos);
        let mut effect;
        if pc.path.is_empty() {
            effect = Effect::new("gated_delivery", pc.gate.as_ref(), eid);
        } else {
            let node = pc.path.remove(0);
            effect = Effect::new("auto_lock", Some(&node), eid);
            if !self.holds(&node, eid) {
                let mode = pc.request.mode();
                self.ctx_mut(&node).insert_activation(Activation::Placeholder { eid: eid.clone(), mode });
            }
        }
        self.continue_pending(pc, &mut effect);
        Ok(effect)
    }

    /// Skips held path nodes and delivers the request once nothing is left.
    fn continue_pending(&mut self, mut pc: PendingCall, effect: &mut Effect) {
        while pc.path.first().is_some_and(|n| self.holds(n, &pc.eid)) {
            pc.path.remove(0);
        }
        let gate_open = pc.gate.as_ref().is_none_or(|g| self.holds(g, &pc.eid));
        if pc.path.is_empty() && gate_open {
            effect.touch(&pc.target);
            self.ctx_mut(&pc.target).queue.push(pc.request);
            if let Some((c, aid)) = pc.emitter {
                effect.touch(&c);
                if let Some(Activation::Running { stmt, .. }) = self
                    .ctx_mut(&c)
                    .activations
                    .iter_mut()
                    .find(|a| matches!(a, Activation::Running { id, eid, .. } if *id == aid && *eid == pc.eid))
                {
                    erase_emit(stmt);
                }
            }
        } else {
            let pos = self.pending_calls.partition_point(|p| (&p.eid, p.id) < (&pc.eid, pc.id));
            self.pending_calls.insert(pos, pc);
        }
    }

    fn do_commit(&mut self, eid: &EventId) -> Result<Effect, EngineError> {
        if !self.events.contains_key(eid) || !self.committable(eid) {
            return Err(Self::stale(format!("commit({eid})")));
        }
        let mut effect = Effect::new("event_return_commit", None, eid);
        let info = self.events.remove(eid).expect("live");
        self.release(eid, &mut effect);
        if !self.options.linear {
            for (k, (target, method, args)) in info.nested.into_iter().enumerate() {
                self.undispatched.push(Undispatched {
                    eid: EventId::new(format!("{eid}.{}", k + 1)),
                    target,
                    method,
                    args,
                    tick: self.clock,
                    creator: Some(eid.clone()),
                });
            }
        }
        self.history.push(HistoryEntry {
            eid: eid.clone(),
            target: info.target,
            method: info.method,
            args: info.args,
            issue_tick: self.issue_ticks.get(eid).copied().unwrap_or_default(),
            commit_tick: self.clock,
            outcome: Outcome::Committed,
            snapshot: info.snapshot,
        });
        Ok(effect)
    }

    /// Drops every activation, queued request and pending call of `eid`.
    fn release(&mut self, eid: &EventId, effect: &mut Effect) {
        let ids: Vec<ContextId> = self
            .contexts
            .iter()
            .filter(|(_, c)| c.holds(eid) || c.queue.iter().any(|r| r.eid() == eid))
            .map(|(id, _)| id.clone())
            .collect();
        for id in ids {
            effect.touch(&id);
            let c = self.ctx_mut(&id);
            c.activations.retain(|a| a.eid() != eid);
            c.queue.retain(|r| r.eid() != eid);
        }
        self.pending_calls.retain(|p| &p.eid != eid);
    }

    /// Fails an event: its locks are released and its partial effects stay.
    fn abort(&mut self, eid: &EventId, reason: String, effect: &mut Effect) {
        self.release(eid, effect);
        if let Some(info) = self.events.remove(eid) {
            self.history.push(HistoryEntry {
                eid: eid.clone(),
                target: info.target,
                method: info.method,
                args: info.args,
                issue_tick: self.issue_ticks.get(eid).copied().unwrap_or_default(),
                commit_tick: self.clock,
                outcome: Outcome::Failed { reason },
                snapshot: info.snapshot,
            });
        }
    }

    fn do_lift(&mut self, ctx: &ContextId, eid: &EventId, aid: u32) -> Result<Effect, EngineError> {
        let stale = || Self::stale(format!("lift({ctx}, {eid}#{aid})"));
        let c = self.contexts.get(ctx).ok_or_else(stale)?;
        let (mode, decorator, lenv, stmt, reply_to) = c
            .activations
            .iter()
            .find_map(|a| match a {
                Activation::Running { eid: e, id, mode, decorator, lenv, stmt, reply_to } if e == eid && *id == aid => {
                    Some((*mode, *decorator, lenv.clone(), stmt.clone(), reply_to.clone()))
                }
                _ => None,
            })
            .ok_or_else(stale)?;
        if is_blocked(&stmt) {
            return Err(stale());
        }
        let cfg = IntraConfig { store: c.store.clone(), genv: c.genv.clone(), lenv, stmt, am: mode };
        let host = CtxHost { program: &self.program, graph: &self.graph, me: ctx };
        let mut effect = Effect::new("lift_intra", Some(ctx), eid);
        let (cfg, label) = match step_intra(cfg, &host) {
            Ok(r) => r,
            Err(e) => {
                effect.rule = "abort";
                effect.note = Some(e.to_string());
                self.abort(eid, e.to_string(), &mut effect);
                return Ok(effect);
            }
        };
        {
            let c = self.ctx_mut(ctx);
            c.store = cfg.store;
            c.genv = cfg.genv;
            if let Some(Activation::Running { lenv, stmt, .. }) =
                c.activations.iter_mut().find(|a| matches!(a, Activation::Running { eid: e, id, .. } if e == eid && *id == aid))
            {
                *lenv = cfg.lenv;
                *stmt = cfg.stmt;
            }
        }
        match label {
            Label::Silent | Label::Ret { .. } => {
                let value = match label {
                    Label::Ret { value } => value,
                    _ => Value::Unit,
                };
                self.finish_activation(ctx, eid, aid, mode);
                match decorator {
                    Decorator::Synch => {
                        effect.rule = "synch_return";
                        let (caller, caid) =
                            reply_to.ok_or_else(|| EngineError::Protocol("synchronous call without caller".into()))?;
                        effect.touch(&caller);
                        self.resume_caller(&caller, caid, eid, ctx, value)?;
                    }
                    Decorator::Asynch => effect.rule = "asynch_return",
                    Decorator::Event => {
                        effect.rule = "event_return";
                        if let Some(info) = self.events.get_mut(eid) {
                            info.entry_returned = true;
                        }
                    }
                }
            }
            Label::Synch { target, method, args, .. } | Label::Asynch { target, method, args, .. }
                if self.graph.class_of(&target).is_some_and(|cl| self.program.method(cl, &method).is_none()) =>
            {
                let cl = self.graph.class_of(&target).unwrap_or_default();
                let reason = format!("class `{cl}` has no method `{method}` ({} args)", args.len());
                effect.rule = "abort";
                effect.note = Some(reason.clone());
                self.abort(eid, reason, &mut effect);
            }
            Label::Synch { target, method, args, .. } => {
                effect.rule = "synch_call";
                let request = Request::Call {
                    eid: eid.clone(),
                    method,
                    args,
                    decorator: Decorator::Synch,
                    mode: self.events[eid].mode,
                    reply_to: Some((ctx.clone(), aid)),
                };
                self.route(ctx, eid, &target, request, None, &mut effect);
            }
            Label::Asynch { target, method, args, .. } => {
                effect.rule = "asynch_call";
                let request = Request::Call {
                    eid: eid.clone(),
                    method,
                    args,
                    decorator: Decorator::Asynch,
                    mode: self.events[eid].mode,
                    reply_to: None,
                };
                self.route(ctx, eid, &target, request, Some((ctx.clone(), aid)), &mut effect);
            }
            Label::Event { target, method, args } => {
                effect.rule = "event_call";
                let known = self.graph.class_of(&target).is_some_and(|cl| self.program.method(cl, &method).is_some());
                if known && !self.graph.is_virtual(&target) {
                    self.events.get_mut(eid).expect("live").nested.push((target, method, args));
                } else {
                    let reason = format!("event call to unknown `{target}.{method}`");
                    effect.note = Some(reason.clone());
                    self.abort(eid, reason, &mut effect);
                }
            }
            Label::Ownership { op, parent, child } => {
                effect.rule = "ownership_change";
                effect.touch(&parent);
                effect.touch(&child);
                if let Err(reason) = self.change_ownership(eid, op, &parent, &child) {
                    effect.note = Some(reason.clone());
                    self.abort(eid, reason, &mut effect);
                }
            }
        }
        Ok(effect)
    }

    fn change_ownership(
        &mut self,
        eid: &EventId,
        op: OwnershipOp,
        parent: &ContextId,
        child: &ContextId,
    ) -> Result<(), String> {
        let info = &self.events[eid];
        if info.early && !self.holds(&info.dominator, eid) {
            return Err("ownership change before the dominator lock".into());
        }
        for n in [parent, child] {
            if self.graph.is_virtual(n) || !self.graph.contains(n) {
                return Err(format!("`{n}` is not a context"));
            }
            if !self.holds(n, eid) {
                return Err(format!("ownership change on `{n}` which the event does not hold"));
            }
        }
        let graph = Arc::make_mut(&mut self.graph);
        match op {
            OwnershipOp::Add => {
                let pc = graph.class_of(parent).unwrap_or_default();
                let cc = graph.class_of(child).unwrap_or_default();
                if !self.program.class(pc).is_some_and(|c| c.owns.iter().any(|o| o == cc)) {
                    return Err(format!("class `{pc}` does not own `{cc}`"));
                }
                graph.add_ownership(parent, child).map_err(|e| e.to_string())?;
            }
            OwnershipOp::Remove => graph.remove_ownership(parent, child).map_err(|e| e.to_string())?,
        }
        self.events.get_mut(eid).expect("live").changed_ownership = true;
        Ok(())
    }

    /// Replaces a finished running activation with the event's placeholder.
    fn finish_activation(&mut self, ctx: &ContextId, eid: &EventId, aid: u32, mode: AccessMode) {
        let c = self.ctx_mut(ctx);
        c.activations.retain(|a| !matches!(a, Activation::Running { eid: e, id, .. } if e == eid && *id == aid));
        c.insert_activation(Activation::Placeholder { eid: eid.clone(), mode });
    }

    fn resume_caller(
        &mut self,
        caller: &ContextId,
        caid: u32,
        eid: &EventId,
        callee: &ContextId,
        value: Value,
    ) -> Result<(), EngineError> {
        let c = self.ctx_mut(caller);
        let store = c.store.clone();
        let genv = c.genv.clone();
        let act = c
            .activations
            .iter_mut()
            .find(|a| matches!(a, Activation::Running { eid: e, id, .. } if e == eid && *id == caid))
            .ok_or_else(|| EngineError::Protocol(format!("caller `{caller}` of `{callee}` is gone")))?;
        if let Activation::Running { lenv, stmt, mode, .. } = act {
            let cfg = IntraConfig { store, genv, lenv: std::mem::take(lenv), stmt: std::mem::take(stmt), am: *mode };
            let cfg = resume_with_return(cfg, callee, value).map_err(|e| EngineError::Protocol(e.to_string()))?;
            *lenv = cfg.lenv;
            *stmt = cfg.stmt;
        }
        Ok(())
    }

    /// Sends a call from `from` to `target`, locking intermediate contexts
    /// first when the target is a deeper descendant. Illegal targets abort.
    fn route(
        &mut self,
        from: &ContextId,
        eid: &EventId,
        target: &ContextId,
        request: Request,
        emitter: Option<(ContextId, u32)>,
        effect: &mut Effect,
    ) {
        let info = &self.events[eid];
        let gate = (info.early && !self.holds(&info.dominator, eid)).then(|| info.dominator.clone());
        let legal_path = if !self.graph.contains(target) || self.graph.is_virtual(target) {
            None
        } else if self.holds(target, eid)
            || self.graph.children(from).is_ok_and(|ch| ch.contains(target))
        {
            Some(Vec::new())
        } else {
            self.graph
                .shortest_path(from, target)
                .map(|p| p[1..p.len() - 1].to_vec())
        };
        let Some(path) = legal_path else {
            let reason = format!("`{from}` may not call `{target}`");
            effect.rule = "abort";
            effect.note = Some(reason.clone());
            self.abort(eid, reason, effect);
            return;
        };
        let id = self.next_call;
        self.next_call += 1;
        let pc = PendingCall { id, eid: eid.clone(), path, target: target.clone(), request, emitter, gate };
        self.continue_pending(pc, effect);
    }

    /// Runs a uniformly random schedule until no transition is enabled.
    pub fn run_random(self, rng: &mut impl rand::Rng, max_steps: usize) -> Result<GlobalConfig, EngineError> {
        let mut cfg = self;
        for _ in 0..max_steps {
            let enabled = cfg.enabled();
            if enabled.is_empty() {
                return Ok(cfg);
            }
            let t = &enabled[rng.gen_range(0..enabled.len())];
            cfg.apply_mut(t)?;
        }
        if cfg.enabled().is_empty() {
            Ok(cfg)
        } else {
            Err(EngineError::StepLimit(max_steps))
        }
    }

    /// Context where a transition takes place: the entry context for a
    /// dispatch, the next lock or call target for an auto-lock, and the
    /// dominator for a commit.
    pub fn site(&self, t: &Transition) -> Option<ContextId> {
        match t {
            Transition::Dispatch { eid } => {
                let u = self.undispatched.iter().find(|u| &u.eid == eid)?;
                if self.options.unsafe_no_dominator {
                    Some(u.target.clone())
                } else {
                    self.graph.dominator(&u.target).ok().cloned()
                }
            }
            Transition::Activate { ctx } | Transition::Promote { ctx, .. } | Transition::Lift { ctx, .. } => {
                Some(ctx.clone())
            }
            Transition::AutoLock { eid, call } => {
                let pc = self.pending_calls.iter().find(|p| &p.eid == eid && p.id == *call)?;
                Some(pc.path.first().unwrap_or(&pc.target).clone())
            }
            Transition::Commit { eid } => self.events.get(eid).map(|i| i.dominator.clone()),
        }
    }

    /// Seeded random run; the same seed always yields the same trace.
    pub fn run_seeded(self, seed: u64, max_steps: usize) -> Result<GlobalConfig, EngineError> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        self.run_random(&mut rng, max_steps)
    }
}

fn admits(c: &ContextState, head: &Request) -> bool {
    match head {
        Request::Call { eid, mode: AccessMode::Ex, .. } => c.activations.iter().all(|a| a.eid() == eid),
        Request::Call { mode: AccessMode::Ro, .. } | Request::LubMarker { mode: AccessMode::Ro, .. } => !c.has_ex(),
        Request::LubMarker { mode: AccessMode::Ex, .. } => c.activations.is_empty(),
    }
}

fn promotable(c: &ContextState, index: usize) -> bool {
    let r = &c.queue[index];
    matches!(r, Request::Call { .. }) && c.holds(r.eid()) && !c.queue[..index].iter().any(|q| q.eid() == r.eid())
}
