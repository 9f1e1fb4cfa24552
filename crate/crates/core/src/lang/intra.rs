//! The intra-context big-step machine.
//!
//! [`step_intra`] runs silent statements until the first synchronization
//! label, leaving a `waiting` or `emit` placeholder where a remote call was
//! issued.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::*;
use super::value::Value;
use crate::graph::ContextId;

pub type Env = BTreeMap<String, Value>;
pub type Store = BTreeMap<String, Value>;

/// What the machine needs to know about the world outside one context.
pub trait Host {
    fn program(&self) -> &Program;
    fn self_id(&self) -> &ContextId;
    fn class_of(&self, c: &ContextId) -> Option<&str>;
    /// Direct children of the executing context, sorted.
    fn children(&self) -> Vec<ContextId>;
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IntraConfig {
    pub store: Store,
    pub genv: Env,
    /// Outermost call frame; local calls nest further frames inside `stmt`.
    pub lenv: Env,
    pub stmt: Vec<Stmt>,
    pub am: AccessMode,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "label", rename_all = "snake_case")]
pub enum Label {
    Silent,
    Ret { value: Value },
    Synch { target: ContextId, method: String, args: Vec<Value>, am: AccessMode },
    Asynch { target: ContextId, method: String, args: Vec<Value>, am: AccessMode },
    Event { target: ContextId, method: String, args: Vec<Value> },
    Ownership { op: OwnershipOp, parent: ContextId, child: ContextId },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IntraError {
    #[error("{span}: write to field `{field}` under readonly access")]
    AccessViolation { field: String, span: Span },
    #[error("{span}: statement head is a runtime placeholder")]
    Stuck { span: Span },
    #[error("{span}: unbound variable `{name}`")]
    Unbound { name: String, span: Span },
    #[error("{span}: expected {expected}, found {found}")]
    TypeMismatch { expected: &'static str, found: String, span: Span },
    #[error("{span}: arithmetic overflow")]
    Overflow { span: Span },
    #[error("{span}: division by zero")]
    DivisionByZero { span: Span },
    #[error("{span}: no field `{field}`")]
    UnknownField { field: String, span: Span },
    #[error("{span}: unknown context `{ctx}`")]
    UnknownContext { ctx: ContextId, span: Span },
    #[error("{span}: class `{class}` has no method `{method}`")]
    UnknownMethod { class: String, method: String, span: Span },
    #[error("{span}: `{method}` takes {expected} argument(s), {given} given")]
    Arity { method: String, expected: usize, given: usize, span: Span },
    #[error("no statement is waiting on `{ctx}`")]
    NoWaitingPlaceholder { ctx: ContextId },
}

enum Outcome {
    Finished,
    Returned(Value),
    Label(Label),
}

struct Machine<'h, H: Host + ?Sized> {
    host: &'h H,
    store: &'h mut Store,
    genv: &'h Env,
    am: AccessMode,
}

fn mismatch(expected: &'static str, v: &Value, span: Span) -> IntraError {
    IntraError::TypeMismatch { expected, found: v.type_name().to_string(), span }
}

/// Evaluates a call-free expression against a frame.
pub fn eval_in<H: Host + ?Sized>(
    host: &H,
    store: &Store,
    genv: &Env,
    env: &Env,
    e: &Expr,
    span: Span,
) -> Result<Value, IntraError> {
    let ev = |e: &Expr| eval_in(host, store, genv, env, e, span);
    Ok(match e {
        Expr::Lit(v) => v.clone(),
        Expr::Var(x) => env
            .get(x)
            .or_else(|| genv.get(x))
            .cloned()
            .ok_or_else(|| IntraError::Unbound { name: x.clone(), span })?,
        Expr::SelfRef => Value::Ctx(host.self_id().clone()),
        Expr::SelfField(f) => store
            .get(f)
            .cloned()
            .ok_or_else(|| IntraError::UnknownField { field: f.clone(), span })?,
        Expr::Get(r, f) => match ev(r)? {
            Value::Record(mut m) => m.remove(f).ok_or_else(|| IntraError::UnknownField { field: f.clone(), span })?,
            other => return Err(mismatch("record", &other, span)),
        },
        Expr::Record(fs) => {
            let mut m = BTreeMap::new();
            for (k, e) in fs {
                m.insert(k.clone(), ev(e)?);
            }
            Value::Record(m)
        }
        Expr::Unary(UnOp::Neg, e) => match ev(e)? {
            Value::Int(i) => Value::Int(i.checked_neg().ok_or(IntraError::Overflow { span })?),
            other => return Err(mismatch("int", &other, span)),
        },
        Expr::Unary(UnOp::Not, e) => match ev(e)? {
            Value::Bool(b) => Value::Bool(!b),
            other => return Err(mismatch("bool", &other, span)),
        },
        Expr::Binary(op, a, b) => binary(*op, ev(a)?, ev(b)?, span)?,
        Expr::ChildCount(class) => {
            let n = host
                .children()
                .iter()
                .filter(|c| host.class_of(c) == Some(class.as_str()))
                .count();
            Value::Int(n as i64)
        }
        Expr::Owns(e) => match ev(e)? {
            Value::Ctx(c) => Value::Bool(host.children().contains(&c)),
            other => return Err(mismatch("context", &other, span)),
        },
    })
}

fn binary(op: BinOp, a: Value, b: Value, span: Span) -> Result<Value, IntraError> {
    use BinOp::*;
    match op {
        Eq => return Ok(Value::Bool(a == b)),
        Ne => return Ok(Value::Bool(a != b)),
        And | Or => {
            let (Value::Bool(x), Value::Bool(y)) = (&a, &b) else {
                let bad = if matches!(a, Value::Bool(_)) { &b } else { &a };
                return Err(mismatch("bool", bad, span));
            };
            return Ok(Value::Bool(if op == And { *x && *y } else { *x || *y }));
        }
        _ => {}
    }
    let (Value::Int(x), Value::Int(y)) = (&a, &b) else {
        let bad = if matches!(a, Value::Int(_)) { &b } else { &a };
        return Err(mismatch("int", bad, span));
    };
    let (x, y) = (*x, *y);
    let overflow = IntraError::Overflow { span };
    Ok(match op {
        Add => Value::Int(x.checked_add(y).ok_or(overflow)?),
        Sub => Value::Int(x.checked_sub(y).ok_or(overflow)?),
        Mul => Value::Int(x.checked_mul(y).ok_or(overflow)?),
        Div | Rem => {
            if y == 0 {
                return Err(IntraError::DivisionByZero { span });
            }
            let r = if op == Div { x.checked_div(y) } else { x.checked_rem(y) };
            Value::Int(r.ok_or(overflow)?)
        }
        Lt => Value::Bool(x < y),
        Le => Value::Bool(x <= y),
        Gt => Value::Bool(x > y),
        Ge => Value::Bool(x >= y),
        Eq | Ne | And | Or => unreachable!(),
    })
}

/// Pure evaluation against the configuration's outermost frame.
pub fn eval_expr<H: Host + ?Sized>(cfg: &IntraConfig, host: &H, e: &Expr) -> Result<Value, IntraError> {
    eval_in(host, &cfg.store, &cfg.genv, &cfg.lenv, e, Span::default())
}

fn assign_or_skip(dest: Option<String>, v: Value, span: Span) -> Stmt {
    match dest {
        Some(d) => Stmt::new(StmtKind::Assign(d, Expr::Lit(v)), span),
        None => Stmt::new(StmtKind::Skip, span),
    }
}

impl<H: Host + ?Sized> Machine<'_, H> {
    fn eval(&self, env: &Env, e: &Expr, span: Span) -> Result<Value, IntraError> {
        eval_in(self.host, self.store, self.genv, env, e, span)
    }

    fn run(&mut self, block: &mut Vec<Stmt>, env: &mut Env) -> Result<Outcome, IntraError> {
        loop {
            let Some(head) = block.first_mut() else {
                return Ok(Outcome::Finished);
            };
            let span = head.span;
            match &mut head.kind {
                StmtKind::Skip => {
                    block.remove(0);
                }
                StmtKind::Assign(x, e) => {
                    let v = self.eval(env, e, span)?;
                    env.insert(x.clone(), v);
                    block.remove(0);
                }
                StmtKind::FieldUpdate(f, e) => {
                    if self.am == AccessMode::Ro {
                        return Err(IntraError::AccessViolation { field: f.clone(), span });
                    }
                    if !self.store.contains_key(f.as_str()) {
                        return Err(IntraError::UnknownField { field: f.clone(), span });
                    }
                    let v = self.eval(env, e, span)?;
                    self.store.insert(f.clone(), v);
                    block.remove(0);
                }
                StmtKind::Return(e) => {
                    let v = self.eval(env, e, span)?;
                    return Ok(Outcome::Returned(v));
                }
                StmtKind::If(c, t, e) => {
                    let cond = match self.eval(env, c, span)? {
                        Value::Bool(b) => b,
                        other => return Err(mismatch("bool", &other, span)),
                    };
                    let branch = std::mem::take(if cond { t } else { e });
                    block.splice(0..1, branch);
                }
                StmtKind::Repeat(n, body) => {
                    let count = match self.eval(env, n, span)? {
                        Value::Int(i) => i.max(0) as u64,
                        other => return Err(mismatch("int", &other, span)),
                    };
                    let body = std::mem::take(body);
                    block[0].kind = StmtKind::Loop { remaining: count, body };
                }
                StmtKind::Loop { remaining, body } => {
                    if *remaining == 0 {
                        block.remove(0);
                    } else {
                        *remaining -= 1;
                        let copy = body.clone();
                        block.splice(0..0, copy);
                    }
                }
                StmtKind::ForChildren { var, class, body } => {
                    let items: Vec<ContextId> = self
                        .host
                        .children()
                        .into_iter()
                        .filter(|c| self.host.class_of(c) == Some(class.as_str()))
                        .collect();
                    let (var, body) = (std::mem::take(var), std::mem::take(body));
                    block[0].kind = StmtKind::Each { var, items, body };
                }
                StmtKind::Each { var, items, body } => {
                    if items.is_empty() {
                        block.remove(0);
                    } else {
                        let item = items.remove(0);
                        let mut prefix = vec![Stmt::new(StmtKind::Assign(var.clone(), Expr::Lit(Value::Ctx(item))), span)];
                        prefix.extend(body.iter().cloned());
                        block.splice(0..0, prefix);
                    }
                }
                StmtKind::Call { dest, target, method, args, kind } => {
                    let target = match self.eval(env, target, span)? {
                        Value::Ctx(c) => c,
                        other => return Err(mismatch("context", &other, span)),
                    };
                    let mut vals = Vec::with_capacity(args.len());
                    for a in args.iter() {
                        vals.push(self.eval(env, a, span)?);
                    }
                    let class = self
                        .host
                        .class_of(&target)
                        .ok_or_else(|| IntraError::UnknownContext { ctx: target.clone(), span })?;
                    let def = self.host.program().method(class, method).cloned().ok_or_else(|| {
                        IntraError::UnknownMethod { class: class.to_string(), method: method.clone(), span }
                    })?;
                    if def.params.len() != vals.len() {
                        return Err(IntraError::Arity {
                            method: method.clone(),
                            expected: def.params.len(),
                            given: vals.len(),
                            span,
                        });
                    }
                    let (dest, method, kind) = (dest.take(), method.clone(), *kind);
                    if kind == CallKind::Sync && &target == self.host.self_id() {
                        let env = def.params.iter().map(|(p, _)| p.clone()).zip(vals).collect();
                        block[0].kind = StmtKind::Frame { dest, env, body: def.body.clone() };
                        continue;
                    }
                    let am = def.mode;
                    let label = match kind {
                        CallKind::Sync => {
                            block[0].kind = StmtKind::Waiting { dest, ctx: target.clone() };
                            Label::Synch { target, method, args: vals, am }
                        }
                        CallKind::Async => {
                            block[0].kind = StmtKind::Emit;
                            Label::Asynch { target, method, args: vals, am }
                        }
                        CallKind::Event => {
                            block.remove(0);
                            Label::Event { target, method, args: vals }
                        }
                    };
                    return Ok(Outcome::Label(label));
                }
                StmtKind::Ownership(op, a, b) => {
                    let op = *op;
                    let parent = match self.eval(env, a, span)? {
                        Value::Ctx(c) => c,
                        other => return Err(mismatch("context", &other, span)),
                    };
                    let child = match self.eval(env, b, span)? {
                        Value::Ctx(c) => c,
                        other => return Err(mismatch("context", &other, span)),
                    };
                    block.remove(0);
                    return Ok(Outcome::Label(Label::Ownership { op, parent, child }));
                }
                StmtKind::Waiting { .. } | StmtKind::Emit => return Err(IntraError::Stuck { span }),
                StmtKind::Frame { dest, env: fenv, body } => {
                    let v = match self.run(body, fenv)? {
                        Outcome::Label(l) => return Ok(Outcome::Label(l)),
                        Outcome::Returned(v) => v,
                        Outcome::Finished => Value::Unit,
                    };
                    let d = dest.take();
                    block[0] = assign_or_skip(d, v, span);
                }
            }
        }
    }
}

/// Runs the maximal silent prefix and returns the first non-silent label.
///
/// A `return` in the outermost frame yields `Ret` and clears the frame.
/// `Silent` is returned only when the statement runs out without a return.
pub fn step_intra<H: Host + ?Sized>(mut cfg: IntraConfig, host: &H) -> Result<(IntraConfig, Label), IntraError> {
    let mut store = std::mem::take(&mut cfg.store);
    let outcome = {
        let mut m = Machine { host, store: &mut store, genv: &cfg.genv, am: cfg.am };
        m.run(&mut cfg.stmt, &mut cfg.lenv)
    };
    cfg.store = store;
    match outcome? {
        Outcome::Finished => Ok((cfg, Label::Silent)),
        Outcome::Returned(value) => {
            cfg.lenv.clear();
            cfg.stmt.clear();
            Ok((cfg, Label::Ret { value }))
        }
        Outcome::Label(l) => Ok((cfg, l)),
    }
}

fn for_each_head_mut(block: &mut [Stmt], f: &mut dyn FnMut(&mut Stmt) -> bool) -> bool {
    let Some(head) = block.first_mut() else { return false };
    if let StmtKind::Frame { body, .. } = &mut head.kind {
        return for_each_head_mut(body, f);
    }
    f(head)
}

/// Replaces the single `waiting(ctx)` placeholder with the returned value.
pub fn resume_with_return(mut cfg: IntraConfig, ctx: &ContextId, v: Value) -> Result<IntraConfig, IntraError> {
    let mut value = Some(v);
    let hit = for_each_head_mut(&mut cfg.stmt, &mut |s| match &mut s.kind {
        StmtKind::Waiting { dest, ctx: c } if c == ctx => {
            let d = dest.take();
            *s = assign_or_skip(d, value.take().unwrap(), s.span);
            true
        }
        _ => false,
    });
    if hit {
        Ok(cfg)
    } else {
        Err(IntraError::NoWaitingPlaceholder { ctx: ctx.clone() })
    }
}

/// Replaces the `emit` placeholder at the head with `skip`.
pub fn erase_emit(stmt: &mut [Stmt]) -> bool {
    for_each_head_mut(stmt, &mut |s| {
        if s.kind == StmtKind::Emit {
            s.kind = StmtKind::Skip;
            true
        } else {
            false
        }
    })
}

/// The context a statement is blocked on, if its head is `waiting`.
pub fn waiting_on(stmt: &[Stmt]) -> Option<&ContextId> {
    let head = stmt.first()?;
    match &head.kind {
        StmtKind::Frame { body, .. } => waiting_on(body),
        StmtKind::Waiting { ctx, .. } => Some(ctx),
        _ => None,
    }
}

/// `true` when the head is a `waiting` or `emit` placeholder.
pub fn is_blocked(stmt: &[Stmt]) -> bool {
    match stmt.first().map(|s| &s.kind) {
        Some(StmtKind::Frame { body, .. }) => is_blocked(body),
        Some(StmtKind::Waiting { .. }) | Some(StmtKind::Emit) => true,
        _ => false,
    }
}

/// Counts `waiting` placeholders anywhere in a statement list.
pub fn count_waiting(stmt: &[Stmt], ctx: &ContextId) -> usize {
    stmt.iter()
        .map(|s| match &s.kind {
            StmtKind::Waiting { ctx: c, .. } => usize::from(c == ctx),
            StmtKind::Frame { body, .. } | StmtKind::Loop { body, .. } | StmtKind::Each { body, .. } => {
                count_waiting(body, ctx)
            }
            StmtKind::If(_, a, b) => count_waiting(a, ctx) + count_waiting(b, ctx),
            _ => 0,
        })
        .sum()
}

/// Binds parameters for a fresh activation of `def`.
pub fn bind_params(def: &MethodDef, args: &[Value]) -> Result<Env, IntraError> {
    if def.params.len() != args.len() {
        return Err(IntraError::Arity {
            method: def.name.clone(),
            expected: def.params.len(),
            given: args.len(),
            span: def.span,
        });
    }
    Ok(def.params.iter().map(|(p, _)| p.clone()).zip(args.iter().cloned()).collect())
}
