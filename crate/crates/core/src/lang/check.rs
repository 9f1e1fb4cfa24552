//! Static checks: name resolution, arity, async-on-value, main-script
//! consistency, the readonly discipline and class-level ownership acyclicity.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use super::ast::*;
use crate::graph::{check_class_dag, ClassDagVerdict, ContextClassDecl, ContextId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    Name,
    Arity,
    AsyncValue,
    Script,
    Readonly,
    OwnershipCycle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub span: Span,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.span, self.message)
    }
}

fn diag(kind: DiagnosticKind, span: Span, message: impl Into<String>) -> Diagnostic {
    Diagnostic { kind, span, message: message.into() }
}

/// Static class of a context-valued variable, when known.
type Scope = BTreeMap<String, Option<String>>;

fn static_class(program: &Program, class: &ClassDef, scope: &Scope, e: &Expr) -> Option<String> {
    match e {
        Expr::SelfRef => Some(class.name.clone()),
        Expr::Var(x) => scope.get(x).cloned().flatten(),
        Expr::SelfField(f) => match class.field(f).map(|fd| &fd.ty) {
            Some(Type::Ctx(c)) if program.classes.contains_key(c) => Some(c.clone()),
            _ => None,
        },
        _ => None,
    }
}

struct Walker<'a> {
    program: &'a Program,
    class: &'a ClassDef,
    diags: Vec<Diagnostic>,
    /// Context classes mentioned by the method bodies.
    effects: BTreeSet<String>,
    /// Resolved `(class, method)` callees, synchronous and asynchronous only.
    callees: BTreeSet<(String, String)>,
    /// First direct readonly violation, if any.
    write: Option<(Span, String)>,
}

impl<'a> Walker<'a> {
    fn block(&mut self, scope: &mut Scope, stmts: &[Stmt]) {
        for s in stmts {
            self.stmt(scope, s);
        }
    }

    fn stmt(&mut self, scope: &mut Scope, s: &Stmt) {
        match &s.kind {
            StmtKind::Assign(x, e) => {
                let c = static_class(self.program, self.class, scope, e);
                scope.insert(x.clone(), c);
            }
            StmtKind::FieldUpdate(f, _) => {
                if self.class.field(f).is_none() {
                    self.diags.push(diag(
                        DiagnosticKind::Name,
                        s.span,
                        format!("class `{}` has no field `{f}`", self.class.name),
                    ));
                }
                self.write.get_or_insert((s.span, format!("writes field `{f}`")));
            }
            StmtKind::Ownership(op, _, _) => {
                let name = match op {
                    OwnershipOp::Add => "add_ownership",
                    OwnershipOp::Remove => "remove_ownership",
                };
                self.write.get_or_insert((s.span, format!("calls `{name}`")));
            }
            StmtKind::Call { dest, target, method, args, kind } => {
                let tc = static_class(self.program, self.class, scope, target);
                let mut ret_class = None;
                if let Some(tc) = &tc {
                    self.effects.insert(tc.clone());
                    match self.program.method(tc, method) {
                        None => self.diags.push(diag(
                            DiagnosticKind::Name,
                            s.span,
                            format!("class `{tc}` has no method `{method}`"),
                        )),
                        Some(m) => {
                            if m.params.len() != args.len() {
                                self.diags.push(diag(
                                    DiagnosticKind::Arity,
                                    s.span,
                                    format!(
                                        "`{tc}.{method}` takes {} argument(s), {} given",
                                        m.params.len(),
                                        args.len()
                                    ),
                                ));
                            }
                            if *kind == CallKind::Async && m.ret != Type::Unit {
                                self.diags.push(diag(
                                    DiagnosticKind::AsyncValue,
                                    s.span,
                                    format!("async call to `{tc}.{method}`, which returns a value"),
                                ));
                            }
                            if *kind != CallKind::Event {
                                self.callees.insert((tc.clone(), method.clone()));
                            }
                            if let Type::Ctx(rc) = &m.ret {
                                ret_class = Some(rc.clone());
                            }
                        }
                    }
                } else if let Expr::Var(x) = target {
                    if !scope.contains_key(x) {
                        self.diags.push(diag(DiagnosticKind::Name, s.span, format!("unbound call target `{x}`")));
                    }
                }
                if let Expr::SelfField(f) = target {
                    match self.class.field(f) {
                        None => self.diags.push(diag(
                            DiagnosticKind::Name,
                            s.span,
                            format!("class `{}` has no field `{f}`", self.class.name),
                        )),
                        Some(fd) if !matches!(fd.ty, Type::Ctx(_)) => self.diags.push(diag(
                            DiagnosticKind::Name,
                            s.span,
                            format!("field `{f}` is not a context reference"),
                        )),
                        _ => {}
                    }
                }
                if let Some(d) = dest {
                    scope.insert(d.clone(), ret_class);
                }
            }
            StmtKind::If(_, t, e) => {
                let mut ts = scope.clone();
                self.block(&mut ts, t);
                let mut es = scope.clone();
                self.block(&mut es, e);
                for (k, v) in ts.into_iter().chain(es) {
                    scope.entry(k).or_insert(v);
                }
            }
            StmtKind::Repeat(_, body) => {
                let mut inner = scope.clone();
                self.block(&mut inner, body);
            }
            StmtKind::ForChildren { var, class, body } => {
                self.child_class(s.span, class);
                let mut inner = scope.clone();
                inner.insert(var.clone(), Some(class.clone()));
                self.block(&mut inner, body);
            }
            StmtKind::Skip | StmtKind::Return(_) => {}
            StmtKind::Waiting { .. }
            | StmtKind::Emit
            | StmtKind::Loop { .. }
            | StmtKind::Each { .. }
            | StmtKind::Frame { .. } => {}
        }
        self.exprs_in(s);
    }

    fn child_class(&mut self, span: Span, class: &str) {
        if !self.program.classes.contains_key(class) {
            self.diags.push(diag(DiagnosticKind::Name, span, format!("unknown class `{class}`")));
        } else if !self.class.owns.iter().any(|c| c == class) {
            self.diags.push(diag(
                DiagnosticKind::Name,
                span,
                format!("class `{}` does not own `{class}`", self.class.name),
            ));
        }
        self.effects.insert(class.to_string());
    }

    fn exprs_in(&mut self, s: &Stmt) {
        let mut counts = Vec::new();
        let mut visit = |e: &Expr| collect_child_counts(e, &mut counts);
        match &s.kind {
            StmtKind::Assign(_, e) | StmtKind::FieldUpdate(_, e) | StmtKind::Return(e) => visit(e),
            StmtKind::If(e, _, _) | StmtKind::Repeat(e, _) => visit(e),
            StmtKind::Call { args, .. } => args.iter().for_each(visit),
            StmtKind::Ownership(_, a, b) => {
                visit(a);
                visit(b);
            }
            _ => {}
        }
        for c in counts {
            self.child_class(s.span, &c);
        }
    }
}

fn collect_child_counts(e: &Expr, out: &mut Vec<String>) {
    match e {
        Expr::ChildCount(c) => out.push(c.clone()),
        Expr::Get(e, _) | Expr::Unary(_, e) | Expr::Owns(e) => collect_child_counts(e, out),
        Expr::Binary(_, a, b) => {
            collect_child_counts(a, out);
            collect_child_counts(b, out);
        }
        Expr::Record(fs) => fs.iter().for_each(|(_, e)| collect_child_counts(e, out)),
        Expr::Lit(_) | Expr::Var(_) | Expr::SelfRef | Expr::SelfField(_) => {}
    }
}

struct MethodFacts {
    mode: AccessMode,
    span: Span,
    callees: BTreeSet<(String, String)>,
    write: Option<(Span, String)>,
}

struct Analysis {
    diags: Vec<Diagnostic>,
    decls: Vec<ContextClassDecl>,
    facts: BTreeMap<(String, String), MethodFacts>,
}

fn analyse(program: &Program) -> Analysis {
    let mut diags = Vec::new();
    let mut decls = Vec::new();
    let mut facts = BTreeMap::new();
    for class in program.classes.values() {
        let mut effects: BTreeSet<String> = BTreeSet::new();
        for o in &class.owns {
            if program.classes.contains_key(o) {
                effects.insert(o.clone());
            } else {
                diags.push(diag(DiagnosticKind::Name, class.span, format!("unknown owned class `{o}`")));
            }
        }
        let mut check_ty = |ty: &Type, span: Span, diags: &mut Vec<Diagnostic>| {
            if let Type::Ctx(c) = ty {
                if program.classes.contains_key(c) {
                    effects.insert(c.clone());
                } else {
                    diags.push(diag(DiagnosticKind::Name, span, format!("unknown type `{c}`")));
                }
            }
        };
        for f in &class.fields {
            check_ty(&f.ty, f.span, &mut diags);
        }
        for m in class.methods.values() {
            for (_, t) in &m.params {
                check_ty(t, m.span, &mut diags);
            }
            check_ty(&m.ret, m.span, &mut diags);
        }
        for m in class.methods.values() {
            let mut w = Walker {
                program,
                class,
                diags: Vec::new(),
                effects: BTreeSet::new(),
                callees: BTreeSet::new(),
                write: None,
            };
            let mut scope: Scope = m
                .params
                .iter()
                .map(|(p, t)| {
                    let c = match t {
                        Type::Ctx(c) if program.classes.contains_key(c) => Some(c.clone()),
                        _ => None,
                    };
                    (p.clone(), c)
                })
                .collect();
            w.block(&mut scope, &m.body);
            diags.extend(w.diags);
            effects.extend(w.effects);
            facts.insert(
                (class.name.clone(), m.name.clone()),
                MethodFacts { mode: m.mode, span: m.span, callees: w.callees, write: w.write },
            );
        }
        decls.push(ContextClassDecl {
            name: class.name.clone(),
            field_types: class.fields.iter().map(|f| (f.name.clone(), f.ty.to_string())).collect(),
            methods: class.methods.keys().cloned().collect(),
            effect_set: effects,
            line: class.span.line,
            col: class.span.col,
        });
    }
    diags.extend(check_main(program));
    Analysis { diags, decls, facts }
}

fn check_main(program: &Program) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut classes: BTreeMap<&ContextId, &str> = BTreeMap::new();
    for inst in &program.main.instances {
        match program.class(&inst.class) {
            None => diags.push(diag(DiagnosticKind::Script, inst.span, format!("unknown class `{}`", inst.class))),
            Some(c) => {
                for (f, _) in &inst.inits {
                    if c.field(f).is_none() {
                        diags.push(diag(
                            DiagnosticKind::Script,
                            inst.span,
                            format!("class `{}` has no field `{f}`", c.name),
                        ));
                    }
                }
            }
        }
        if classes.insert(&inst.id, &inst.class).is_some() {
            diags.push(diag(DiagnosticKind::Script, inst.span, format!("duplicate instance `{}`", inst.id)));
        }
    }
    for e in &program.main.edges {
        match (classes.get(&e.parent), classes.get(&e.child)) {
            (Some(pc), Some(cc)) => {
                let allowed = program.class(pc).is_some_and(|c| c.owns.iter().any(|o| o == cc));
                if !allowed {
                    diags.push(diag(
                        DiagnosticKind::Script,
                        e.span,
                        format!("class `{pc}` does not own `{cc}` (`{}` -> `{}`)", e.parent, e.child),
                    ));
                }
            }
            _ => diags.push(diag(
                DiagnosticKind::Script,
                e.span,
                format!("unknown instance in `{}` -> `{}`", e.parent, e.child),
            )),
        }
    }
    for s in &program.main.sets {
        let ok = classes
            .get(&s.ctx)
            .and_then(|c| program.class(c))
            .is_some_and(|c| c.field(&s.field).is_some());
        if !ok {
            diags.push(diag(DiagnosticKind::Script, s.span, format!("unknown field `{}.{}`", s.ctx, s.field)));
        }
    }
    for ev in &program.main.events {
        let Some(class) = classes.get(&ev.target) else {
            diags.push(diag(DiagnosticKind::Script, ev.span, format!("unknown instance `{}`", ev.target)));
            continue;
        };
        match program.method(class, &ev.method) {
            None => diags.push(diag(
                DiagnosticKind::Script,
                ev.span,
                format!("class `{class}` has no method `{}`", ev.method),
            )),
            Some(m) if m.params.len() != ev.args.len() => diags.push(diag(
                DiagnosticKind::Arity,
                ev.span,
                format!("`{class}.{}` takes {} argument(s), {} given", ev.method, m.params.len(), ev.args.len()),
            )),
            Some(_) => {}
        }
    }
    diags
}

/// Context class declarations with their collected effect sets.
pub fn class_decls(program: &Program) -> Vec<ContextClassDecl> {
    analyse(program).decls
}

/// One diagnostic per readonly method that writes, changes ownership or
/// reaches an exclusive method through its (statically resolved) calls.
pub fn check_readonly(program: &Program) -> Vec<Diagnostic> {
    let facts = analyse(program).facts;
    let mut out = Vec::new();
    for ((class, name), f) in &facts {
        if f.mode != AccessMode::Ro {
            continue;
        }
        if let Some((span, why)) = &f.write {
            out.push(diag(DiagnosticKind::Readonly, *span, format!("readonly method `{class}.{name}` {why}")));
            continue;
        }
        // Breadth-first over the call graph, remembering the chain.
        let start = (class.clone(), name.clone());
        let mut seen = BTreeSet::from([start.clone()]);
        let mut queue = std::collections::VecDeque::from([(start, Vec::<String>::new())]);
        let mut found = None;
        while let Some((m, chain)) = queue.pop_front() {
            let Some(mf) = facts.get(&m) else { continue };
            for callee in &mf.callees {
                let Some(cf) = facts.get(callee) else { continue };
                let mut next_chain = chain.clone();
                next_chain.push(format!("{}.{}", callee.0, callee.1));
                if cf.mode == AccessMode::Ex {
                    found = Some(format!("reaches exclusive method via {}", next_chain.join(" -> ")));
                } else if cf.write.is_some() {
                    found = Some(format!("reaches a write via {}", next_chain.join(" -> ")));
                }
                if found.is_some() {
                    break;
                }
                if seen.insert(callee.clone()) {
                    queue.push_back((callee.clone(), next_chain));
                }
            }
            if found.is_some() {
                break;
            }
        }
        if let Some(why) = found {
            out.push(diag(DiagnosticKind::Readonly, f.span, format!("readonly method `{class}.{name}` {why}")));
        }
    }
    out
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct CheckReport {
    pub diagnostics: Vec<Diagnostic>,
}

impl CheckReport {
    pub fn accepted(&self) -> bool {
        self.diagnostics.is_empty()
    }
}

/// All static checks, diagnostics sorted by position.
pub fn check_program(program: &Program) -> CheckReport {
    let analysis = analyse(program);
    let mut diagnostics = analysis.diags;
    if let ClassDagVerdict::Reject { cycle } = check_class_dag(&analysis.decls) {
        let first = &cycle[0];
        let span = program.class(first).map(|c| c.span).unwrap_or_default();
        let mut path = cycle.clone();
        path.push(first.clone());
        diagnostics.push(diag(
            DiagnosticKind::OwnershipCycle,
            span,
            format!("class ownership cycle: {}", path.join(" -> ")),
        ));
    }
    diagnostics.extend(check_readonly(program));
    diagnostics.sort_by_key(|d| d.span);
    CheckReport { diagnostics }
}
