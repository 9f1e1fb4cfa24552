use std::collections::BTreeMap;

use proptest::prelude::*;

use super::intra::{count_waiting, erase_emit, is_blocked};
use super::*;
use crate::graph::{check_class_dag, ContextClassDecl, ContextId};

const GAME: &str = include_str!("../../../../scenarios/game.aeon");
const CYCLE: &str = include_str!("../../../../scenarios/cycle.aeon");
const RO_WRITE: &str = include_str!("../../../../scenarios/ro_write.aeon");

struct TestHost {
    program: Program,
    me: ContextId,
    classes: BTreeMap<ContextId, String>,
    children: Vec<ContextId>,
}

impl Host for TestHost {
    fn program(&self) -> &Program {
        &self.program
    }
    fn self_id(&self) -> &ContextId {
        &self.me
    }
    fn class_of(&self, c: &ContextId) -> Option<&str> {
        self.classes.get(c).map(String::as_str)
    }
    fn children(&self) -> Vec<ContextId> {
        self.children.clone()
    }
}

fn host(src: &str, me: &str, classes: &[(&str, &str)], children: &[&str]) -> TestHost {
    TestHost {
        program: parse_program(src).unwrap_or_else(|e| panic!("{e}")),
        me: me.into(),
        classes: classes.iter().map(|(c, k)| (ContextId::from(*c), k.to_string())).collect(),
        children: children.iter().map(|c| ContextId::from(*c)).collect(),
    }
}

fn start(h: &TestHost, class: &str, method: &str, args: &[Value], store: Store) -> IntraConfig {
    let def = h.program.method(class, method).unwrap();
    IntraConfig {
        store,
        genv: Env::new(),
        lenv: intra::bind_params(def, args).unwrap(),
        stmt: def.body.clone(),
        am: def.mode,
    }
}

fn store(pairs: &[(&str, Value)]) -> Store {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

#[test]
fn parses_the_game_listing() {
    let p = parse_program(GAME).unwrap();
    let names: Vec<&str> = p.classes.keys().map(String::as_str).collect();
    assert_eq!(names, ["Building", "Item", "Player", "Room"]);
    assert_eq!(p.main.instances.len(), 9);
    assert_eq!(p.main.edges.len(), 12);
    assert_eq!(p.main.events.len(), 4);
    assert_eq!(p.main.events[3].tick, 1);
    assert_eq!(p.method("Room", "nr_players").unwrap().mode, AccessMode::Ro);
}

#[test]
fn empty_source_is_an_empty_program() {
    let p = parse_program("").unwrap();
    assert!(p.classes.is_empty());
    assert!(p.main.instances.is_empty());
}

#[test]
fn unclosed_block_reports_end_of_input() {
    let err = parse_program("context A {\n  field x: int = 1;\n").unwrap_err();
    assert_eq!(err.line, 3);
    assert!(err.to_string().contains("expected"), "{err}");
}

#[test]
fn parse_errors_are_located() {
    let err = parse_program("context A {\n  method m() { let = 3; }\n}").unwrap_err();
    assert_eq!((err.line, err.col), (2, 20));
}

#[test]
fn check_accepts_game_and_rejects_bad_programs() {
    assert!(check_program(&parse_program(GAME).unwrap()).accepted());

    let cyc = check_program(&parse_program(CYCLE).unwrap());
    assert!(!cyc.accepted());
    let d = cyc.diagnostics.iter().find(|d| d.kind == DiagnosticKind::OwnershipCycle).unwrap();
    assert!(d.message.contains("Alpha -> Beta -> Alpha"), "{}", d.message);
    assert_eq!(d.span.line, 2);

    let ro = check_program(&parse_program(RO_WRITE).unwrap());
    assert_eq!(ro.diagnostics.len(), 1);
    assert_eq!(ro.diagnostics[0].kind, DiagnosticKind::Readonly);
    assert_eq!(ro.diagnostics[0].span.line, 6);
}

#[test]
fn readonly_check_follows_the_call_graph() {
    let src = r#"
context A owns [B] {
  ro method count() -> int { return size(children[B]); }
  ro method probe(b: B) -> int { return b.bump(); }
}
context B {
  field n: int = 0;
  method bump() -> int { self.n = self.n + 1; return self.n; }
}
"#;
    let diags = check_readonly(&parse_program(src).unwrap());
    assert_eq!(diags.len(), 1);
    assert!(diags[0].message.contains("probe"), "{}", diags[0].message);
}

#[test]
fn check_reports_names_arity_and_async_values() {
    let src = r#"
context A owns [B] {
  field b: B;
  method m() {
    self.b.nope();
    self.b.get(1);
    async self.b.get();
    let z = q + 1;
  }
}
context B {
  method get() -> int { return 1; }
}
"#;
    let kinds: Vec<DiagnosticKind> =
        check_program(&parse_program(src).unwrap()).diagnostics.iter().map(|d| d.kind).collect();
    assert!(kinds.contains(&DiagnosticKind::Name));
    assert!(kinds.contains(&DiagnosticKind::Arity));
    assert!(kinds.contains(&DiagnosticKind::AsyncValue));
}

#[test]
fn return_produces_ret_label() {
    let h = host("context A { method one() -> int { return 1; } }", "a", &[("a", "A")], &[]);
    let (cfg, label) = step_intra(start(&h, "A", "one", &[], Store::new()), &h).unwrap();
    assert_eq!(label, Label::Ret { value: Value::Int(1) });
    assert!(cfg.stmt.is_empty());
}

#[test]
fn get_gold_blocks_on_the_gold_mine_then_puts_treasure() {
    let h = host(GAME, "P1", &[("P1", "Player"), ("Mine", "Item"), ("T", "Item")], &["Mine", "T"]);
    let s = store(&[
        ("playerId", Value::Int(1)),
        ("gold", Value::Int(0)),
        ("gold_mine", Value::Ctx("Mine".into())),
        ("treasure", Value::Ctx("T".into())),
    ]);
    let (cfg, label) = step_intra(start(&h, "Player", "get_gold", &[Value::Int(5)], s), &h).unwrap();
    assert!(matches!(&label, Label::Synch { target, method, am: AccessMode::Ex, .. } if target.as_str() == "Mine" && method == "get"));
    assert!(is_blocked(&cfg.stmt));
    let cfg = resume_with_return(cfg, &"Mine".into(), Value::Bool(true)).unwrap();
    let (cfg, label) = step_intra(cfg, &h).unwrap();
    assert_eq!(
        label,
        Label::Synch {
            target: "T".into(),
            method: "put".into(),
            args: vec![Value::Int(1), Value::Int(5)],
            am: AccessMode::Ex
        }
    );
    let cfg = resume_with_return(cfg, &"T".into(), Value::Unit).unwrap();
    let (cfg, label) = step_intra(cfg, &h).unwrap();
    assert_eq!(label, Label::Ret { value: Value::Bool(true) });
    assert_eq!(cfg.store["gold"], Value::Int(5));
}

#[test]
fn async_loop_emits_one_label_per_room() {
    let rooms = [("Castle", "Building"), ("R1", "Room"), ("R2", "Room"), ("R3", "Room")];
    let h = host(GAME, "Castle", &rooms, &["R1", "R2", "R3"]);
    let mut cfg = start(&h, "Building", "updateTimeOfDay", &[], store(&[("time", Value::Int(0))]));
    let mut targets = Vec::new();
    loop {
        let (mut next, label) = step_intra(cfg, &h).unwrap();
        match label {
            Label::Asynch { target, .. } => {
                targets.push(target);
                assert!(is_blocked(&next.stmt));
                assert!(erase_emit(&mut next.stmt));
            }
            Label::Ret { .. } => {
                assert_eq!(next.store["time"], Value::Int(1));
                break;
            }
            other => panic!("{other:?}"),
        }
        cfg = next;
    }
    assert_eq!(targets, vec![ContextId::from("R1"), "R2".into(), "R3".into()]);
}

#[test]
fn resume_only_matches_the_awaited_context() {
    let src = "context A owns [A] { method m(x: A, y: A) -> int { let a = x.f(); let b = y.f(); return a + b; } method f() -> int { return 2; } }";
    let h = host(src, "a", &[("a", "A"), ("x", "A"), ("y", "A")], &["x", "y"]);
    let cfg = start(&h, "A", "m", &[Value::Ctx("x".into()), Value::Ctx("y".into())], Store::new());
    let (cfg, _) = step_intra(cfg, &h).unwrap();
    assert_eq!(count_waiting(&cfg.stmt, &"x".into()), 1);
    assert!(matches!(
        resume_with_return(cfg.clone(), &"y".into(), Value::Int(1)),
        Err(IntraError::NoWaitingPlaceholder { .. })
    ));
    let cfg = resume_with_return(cfg, &"x".into(), Value::Int(3)).unwrap();
    let (cfg, label) = step_intra(cfg, &h).unwrap();
    assert!(matches!(label, Label::Synch { target, .. } if target.as_str() == "y"));
    let cfg = resume_with_return(cfg, &"y".into(), Value::Int(4)).unwrap();
    assert_eq!(step_intra(cfg, &h).unwrap().1, Label::Ret { value: Value::Int(7) });
}

#[test]
fn readonly_write_is_an_access_violation() {
    let h = host(RO_WRITE, "C", &[("C", "Counter")], &[]);
    let err = step_intra(start(&h, "Counter", "peek", &[], store(&[("hits", Value::Int(0))])), &h).unwrap_err();
    assert!(matches!(err, IntraError::AccessViolation { ref field, .. } if field == "hits"));
}

#[test]
fn records_are_values() {
    let src = r#"context A {
      field r: record = unit;
      method m() -> int {
        let a = {x: 1, y: 2};
        self.r = a;
        a = {x: 5, y: a.y};
        return self.r.x + a.x;
      }
    }"#;
    let h = host(src, "a", &[("a", "A")], &[]);
    let (cfg, label) = step_intra(start(&h, "A", "m", &[], store(&[("r", Value::Unit)])), &h).unwrap();
    assert_eq!(label, Label::Ret { value: Value::Int(6) });
    assert!(matches!(&cfg.store["r"], Value::Record(m) if m["x"] == Value::Int(1)));
}

#[test]
fn arithmetic_errors_are_reported() {
    let src = "context A { method d(x: int) -> int { return 10 / x; } method o(x: int) -> int { return x * x; } }";
    let h = host(src, "a", &[("a", "A")], &[]);
    assert!(matches!(
        step_intra(start(&h, "A", "d", &[Value::Int(0)], Store::new()), &h),
        Err(IntraError::DivisionByZero { .. })
    ));
    assert!(matches!(
        step_intra(start(&h, "A", "o", &[Value::Int(i64::MAX)], Store::new()), &h),
        Err(IntraError::Overflow { .. })
    ));
}

#[test]
fn local_calls_run_in_their_own_frame() {
    let src = r#"context A {
      field n: int = 0;
      method outer() -> int { let x = 1; let y = self.inner(10); return x + y; }
      method inner(x: int) -> int { self.n = x; return x * 2; }
    }"#;
    let h = host(src, "a", &[("a", "A")], &[]);
    let (cfg, label) = step_intra(start(&h, "A", "outer", &[], store(&[("n", Value::Int(0))])), &h).unwrap();
    assert_eq!(label, Label::Ret { value: Value::Int(21) });
    assert_eq!(cfg.store["n"], Value::Int(10));
}

/// Direct recursive evaluator for call-free method bodies, used as an
/// oracle for the step machine.
fn big_step(stmts: &[Stmt], store: &mut Store, env: &mut Env) -> Option<Value> {
    fn ev(e: &Expr, store: &Store, env: &Env) -> i64 {
        match e {
            Expr::Lit(Value::Int(n)) => *n,
            Expr::Var(x) => env[x].as_int().unwrap(),
            Expr::SelfField(f) => store[f].as_int().unwrap(),
            Expr::Binary(op, a, b) => {
                let (a, b) = (ev(a, store, env), ev(b, store, env));
                match op {
                    ast::BinOp::Add => a.wrapping_add(b),
                    ast::BinOp::Sub => a.wrapping_sub(b),
                    ast::BinOp::Lt => (a < b) as i64,
                    _ => unreachable!(),
                }
            }
            _ => unreachable!("{e:?}"),
        }
    }
    for s in stmts {
        match &s.kind {
            StmtKind::Skip => {}
            StmtKind::Assign(x, e) => {
                let v = ev(e, store, env);
                env.insert(x.clone(), Value::Int(v));
            }
            StmtKind::FieldUpdate(f, e) => {
                let v = ev(e, store, env);
                store.insert(f.clone(), Value::Int(v));
            }
            StmtKind::If(c, a, b) => {
                let branch = if ev(c, store, env) != 0 { a } else { b };
                if let Some(v) = big_step(branch, store, env) {
                    return Some(v);
                }
            }
            StmtKind::Repeat(n, body) => {
                for _ in 0..ev(n, store, env) {
                    if let Some(v) = big_step(body, store, env) {
                        return Some(v);
                    }
                }
            }
            StmtKind::Return(e) => return Some(Value::Int(ev(e, store, env))),
            other => unreachable!("{other:?}"),
        }
    }
    None
}

fn arb_body() -> impl Strategy<Value = String> {
    let atom = prop_oneof![
        (0i64..5).prop_map(|n| n.to_string()),
        Just("x".to_string()),
        Just("self.f".to_string()),
    ];
    let expr = (atom.clone(), prop_oneof![Just("+"), Just("-")], atom).prop_map(|(a, o, b)| format!("{a} {o} {b}"));
    let stmt = prop_oneof![
        expr.clone().prop_map(|e| format!("x = {e};")),
        expr.clone().prop_map(|e| format!("self.f = {e};")),
        (expr.clone(), expr.clone()).prop_map(|(a, b)| format!("if ({a} < {b}) {{ x = {a}; }} else {{ self.f = {b}; }}")),
        (0i64..4, expr.clone()).prop_map(|(n, e)| format!("repeat ({n}) {{ self.f = {e}; }}")),
    ];
    (prop::collection::vec(stmt, 0..6), expr).prop_map(|(s, r)| format!("let x = 1; {} return {r};", s.join(" ")))
}

proptest! {
    #[test]
    fn step_machine_agrees_with_direct_evaluation(body in arb_body(), f0 in -3i64..3) {
        let src = format!("context A {{ field f: int = 0; method m() -> int {{ {body} }} }}");
        let h = host(&src, "a", &[("a", "A")], &[]);
        let def = h.program.method("A", "m").unwrap().clone();
        let (cfg, label) = step_intra(start(&h, "A", "m", &[], store(&[("f", Value::Int(f0))])), &h).unwrap();
        let mut st = store(&[("f", Value::Int(f0))]);
        let mut env = Env::new();
        let expected = big_step(&def.body, &mut st, &mut env);
        prop_assert_eq!(label, Label::Ret { value: expected.unwrap() });
        prop_assert_eq!(cfg.store, st);
    }

    #[test]
    fn readonly_runs_never_change_the_store(f0 in -100i64..100) {
        let src = "context A { field f: int = 0; ro method m() -> int { let y = self.f + 1; repeat (3) { y = y + self.f; } return y; } }";
        let h = host(src, "a", &[("a", "A")], &[]);
        let s = store(&[("f", Value::Int(f0))]);
        let (cfg, label) = step_intra(start(&h, "A", "m", &[], s.clone()), &h).unwrap();
        prop_assert_eq!(cfg.store, s);
        prop_assert_eq!(label, Label::Ret { value: Value::Int(f0 * 4 + 1) });
    }

    #[test]
    fn class_dag_accepts_forward_only_ownership(n in 1usize..7, seed in any::<u64>(), back in any::<bool>()) {
        // Classes only own classes with a larger index, optionally plus one back edge.
        let mut decls: Vec<ContextClassDecl> = (0..n).map(|i| ContextClassDecl {
            name: format!("C{i}"),
            field_types: vec![],
            methods: vec![],
            effect_set: (i + 1..n).filter(|j| (seed >> (i * 7 + j)) & 1 == 1).map(|j| format!("C{j}")).collect(),
            line: i + 1,
            col: 1,
        }).collect();
        prop_assert!(check_class_dag(&decls).is_accept());
        if back && n >= 2 {
            decls[0].effect_set.insert(format!("C{}", n - 1));
            decls[n - 1].effect_set.insert("C0".into());
            prop_assert!(!check_class_dag(&decls).is_accept());
        }
    }
}
