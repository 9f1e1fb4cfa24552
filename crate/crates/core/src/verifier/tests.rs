use super::*;
use crate::engine::{Activation, Request};
use crate::verifier::oracle::store_hashes;
use crate::lang::{check_program, parse_program, Value};
use crate::testgen::{independent_pair, random_program, GenParams};

const TREASURE_HORSE: &str = include_str!("../../../../scenarios/treasure_horse.aeon");
const TIMELINE: &str = include_str!("../../../../scenarios/timeline.aeon");
const RO_PAIR: &str = include_str!("../../../../scenarios/ro_pair.aeon");

fn program(src: &str) -> Program {
    parse_program(src).unwrap_or_else(|e| panic!("{e}"))
}

fn wide() -> ExploreOptions {
    ExploreOptions { bounds: Bounds { max_configs: 200_000, max_depth: 10_000 }, serializability: true }
}

fn spec(target: &str, method: &str, args: Vec<Value>) -> EventSpec {
    EventSpec { target: target.into(), method: method.into(), args, tick: 0, span: Default::default() }
}

const PERSON: &str = r#"
context Person {
  field tokens: int = 0;
  method add_tokens(n: int) { self.tokens = self.tokens + n; }
  method double() { self.tokens = self.tokens * 2; }
}
context Pair owns [Person] {
}
main {
  instance Ann: Person;
  instance Bob: Person;
  instance Both: Pair;
  own Both -> Ann;
  own Both -> Bob;
}
"#;

#[test]
fn linear_execute_runs_events_in_order() {
    let p = program(PERSON);
    let one = spec("Ann", "add_tokens", vec![Value::Int(1)]);
    let twice = linear_execute(&p, &[one.clone(), one.clone()]).unwrap();
    let expected = linear_execute(&p, &[spec("Ann", "add_tokens", vec![Value::Int(2)])]).unwrap();
    assert_eq!(twice, expected);
    let dbl = spec("Ann", "double", vec![]);
    assert_ne!(
        linear_execute(&p, &[one.clone(), dbl.clone()]).unwrap(),
        linear_execute(&p, &[dbl, one]).unwrap()
    );
}

#[test]
fn timeline_oracle_sees_e3_before_e1() {
    let p = program(TIMELINE);
    let e3 = spec("Horse", "use", vec![Value::Int(0)]);
    let e1 = spec("Player1", "act", vec![]);
    let mut oracle = LinearOracle::new(&p).unwrap();
    let digests = oracle.outcomes(&[e3, e1]).unwrap().clone();
    assert_eq!(digests.len(), 1);
    let run = GlobalConfig::new(&p, EngineOptions::default()).unwrap().run_seeded(0, 10_000).unwrap();
    let order: Vec<&str> = run.history().iter().map(|h| h.eid.as_str()).collect();
    assert!(order.iter().position(|e| *e == "E3") < order.iter().position(|e| *e == "E1"));
    let h: Vec<EventSpec> = run.history().iter().map(spec_of).collect();
    assert!(oracle.outcomes(&h).unwrap().contains(&run.store_digest()));
}

#[test]
fn single_event_oracle_matches_engine() {
    for seed in 0..30 {
        let g = random_program(seed, &GenParams { allow_async: false, allow_nested: false, ..Default::default() });
        for e in &g.program.main.events {
            let solo = EventSpec { tick: 0, ..e.clone() };
            let run = GlobalConfig::with_events(&g.program, std::slice::from_ref(&solo), EngineOptions::default())
                .unwrap()
                .run_seeded(seed, 100_000)
                .unwrap();
            let oracle = linear_execute(&g.program, &[solo]).unwrap();
            let engine = store_hashes(&run.stores());
            assert_eq!(engine, oracle, "seed {seed}\n{}", g.source);
        }
    }
}

#[test]
fn fresh_config_has_no_deadlock() {
    let c = GlobalConfig::new(&program(TREASURE_HORSE), EngineOptions::default()).unwrap();
    assert!(detect_deadlock(&c).is_none());
}

#[test]
fn hand_built_two_cycle_is_detected() {
    let p = program(PERSON);
    let mut c = GlobalConfig::new(&p, EngineOptions::default()).unwrap();
    let (ea, eb) = (EventId::new("Ea"), EventId::new("Eb"));
    let call_in = |eid: &EventId, mode| Request::Call {
        eid: eid.clone(),
        method: "double".into(),
        args: vec![],
        decorator: crate::engine::Decorator::Synch,
        mode,
        reply_to: None,
    };
    let call = |eid: &EventId| call_in(eid, AccessMode::Ex);
    let ann = c.context_mut(&"Ann".into()).unwrap();
    ann.insert_activation(Activation::Placeholder { eid: ea.clone(), mode: AccessMode::Ex });
    ann.queue.push(call(&eb));
    let bob = c.context_mut(&"Bob".into()).unwrap();
    bob.insert_activation(Activation::Placeholder { eid: eb.clone(), mode: AccessMode::Ex });
    bob.queue.push(call(&ea));
    let w = detect_deadlock(&c).unwrap();
    assert_eq!(w.cycle.len(), 2);
    assert!(w.holds_in(&c));

    // Readonly holders do not block a readonly waiter.
    let mut r = GlobalConfig::new(&p, EngineOptions::default()).unwrap();
    for (ctx, holder, waiter) in [("Ann", &ea, &eb), ("Bob", &eb, &ea)] {
        let s = r.context_mut(&ctx.into()).unwrap();
        s.insert_activation(Activation::Placeholder { eid: holder.clone(), mode: AccessMode::Ro });
        s.queue.push(call_in(waiter, AccessMode::Ro));
    }
    assert!(detect_deadlock(&r).is_none());
}

#[test]
fn treasure_horse_is_deadlock_free_and_serializable() {
    let p = program(TREASURE_HORSE);
    let report = explore(&p, EngineOptions::default(), wide()).unwrap();
    assert_eq!(report.verdict(), Verdict::Pass, "{report}");
    assert!(report.deadlocks.is_empty());
    assert_eq!(report.terminal_states.len(), 2);
}

#[test]
fn treasure_horse_without_dominators_deadlocks() {
    let p = program(TREASURE_HORSE);
    let opts = EngineOptions { unsafe_no_dominator: true, ..Default::default() };
    let report = explore(&p, opts, wide()).unwrap();
    assert_eq!(report.verdict(), Verdict::Violation);
    let d = &report.deadlocks[0];
    // Replaying the reported schedule reaches a configuration with the cycle.
    let mut c = GlobalConfig::new(&p, opts).unwrap();
    for t in &d.trace {
        c = c.apply(t).unwrap();
    }
    assert!(d.what.holds_in(&c));
}

#[test]
fn single_event_explores_to_one_state() {
    let p = program(PERSON);
    let start = GlobalConfig::with_events(&p, &[spec("Ann", "add_tokens", vec![Value::Int(3)])], EngineOptions::default()).unwrap();
    let report = explore_from(&p, start, wide(), &mut |_| {}).unwrap();
    assert_eq!(report.verdict(), Verdict::Pass);
    assert_eq!(report.terminal_states.len(), 1);
}

#[test]
fn conflicting_events_reach_one_state_per_order() {
    let p = program(PERSON);
    let evs = [spec("Ann", "add_tokens", vec![Value::Int(1)]), spec("Ann", "double", vec![])];
    let start = GlobalConfig::with_events(&p, &evs, EngineOptions::default()).unwrap();
    let report = explore_from(&p, start, wide(), &mut |_| {}).unwrap();
    assert_eq!(report.verdict(), Verdict::Pass, "{report}");
    assert_eq!(report.terminal_states.len(), 2);
}

#[test]
fn tiny_bound_is_inconclusive() {
    let p = program(TREASURE_HORSE);
    let opts = ExploreOptions { bounds: Bounds { max_configs: 10, max_depth: 64 }, serializability: true };
    let report = explore(&p, EngineOptions::default(), opts).unwrap();
    assert_eq!(report.verdict(), Verdict::BoundExhausted);
    let shallow = ExploreOptions { bounds: Bounds { max_configs: 1000, max_depth: 3 }, serializability: true };
    assert_eq!(explore(&p, EngineOptions::default(), shallow).unwrap().verdict(), Verdict::BoundExhausted);
}

#[test]
fn exploration_is_deterministic() {
    let p = program(TIMELINE);
    let a = explore(&p, EngineOptions::default(), wide()).unwrap();
    let b = explore(&p, EngineOptions::default(), wide()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn adversarial_history_breaks_realtime() {
    let mk = |eid: &str, issue, commit| HistoryEntry {
        eid: EventId::new(eid),
        target: "Ann".into(),
        method: "double".into(),
        args: vec![],
        issue_tick: issue,
        commit_tick: commit,
        outcome: crate::engine::Outcome::Committed,
        snapshot: Default::default(),
    };
    assert!(check_realtime(&[mk("A", 0, 5), mk("B", 1, 6)]).is_empty());
    let v = check_realtime(&[mk("A", 10, 12), mk("B", 1, 4)]);
    assert_eq!(v, vec![RealtimeViolation { first: EventId::new("A"), second: EventId::new("B") }]);
}

#[test]
fn wrong_final_state_is_flagged() {
    let p = program(PERSON);
    let evs = [spec("Ann", "add_tokens", vec![Value::Int(1)])];
    let done = GlobalConfig::with_events(&p, &evs, EngineOptions::default()).unwrap().run_seeded(0, 1000).unwrap();
    let mut oracle = LinearOracle::new(&p).unwrap();
    assert!(check_history_digest(done.history(), &done.store_digest(), &mut oracle).is_ok());
    let other = GlobalConfig::new(&p, EngineOptions::default()).unwrap().store_digest();
    assert!(matches!(
        check_history_digest(done.history(), &other, &mut oracle),
        Err(SerializabilityError::Digest(_))
    ));
}

#[test]
fn ro_pair_runs_concurrently_and_keeps_lock_shape() {
    let p = program(RO_PAIR);
    let mut both = 0;
    let report = explore_from(&p, GlobalConfig::new(&p, EngineOptions::default()).unwrap(), wide(), &mut |v| {
        if let Visit::Config(c) = v {
            if c.context(&"Books".into()).unwrap().activations.iter().filter(|a| matches!(a, Activation::Running { .. })).count() == 2 {
                both += 1;
            }
        }
    })
    .unwrap();
    assert_eq!(report.verdict(), Verdict::Pass);
    assert!(both > 0);
}

#[test]
fn commutativity_cases() {
    let p = program(PERSON);
    let a = spec("Ann", "add_tokens", vec![Value::Int(1)]);
    let b = spec("Bob", "double", vec![]);
    let r = check_commutativity(&p, &a, &b, wide().bounds).unwrap();
    assert!(r.converges());

    let ro = program(RO_PAIR);
    let audit = spec("Books", "audit", vec![]);
    assert!(check_commutativity(&ro, &audit, &audit, wide().bounds).unwrap().converges());

    let c = spec("Ann", "double", vec![]);
    assert!(matches!(check_commutativity(&p, &a, &c, wide().bounds), Err(CommutativityError::NotIndependent(_))));
}

#[test]
fn generated_programs_pass_static_checks() {
    for seed in 0..100 {
        let g = random_program(seed, &GenParams::default());
        let report = check_program(&g.program);
        assert!(report.accepted(), "seed {seed}: {:?}\n{}", report.diagnostics, g.source);
        let (g, _, _) = independent_pair(seed);
        assert!(check_program(&g.program).accepted(), "{}", g.source);
    }
}

#[test]
fn generated_programs_are_serializable() {
    for seed in 0..25 {
        let g = random_program(seed, &GenParams::default());
        let report = explore(&g.program, EngineOptions::default(), wide()).unwrap();
        assert_eq!(report.verdict(), Verdict::Pass, "seed {seed}\n{report}\n{}", g.source);
    }
}

#[test]
fn generated_pairs_commute() {
    for seed in 0..25 {
        let (g, a, b) = independent_pair(seed);
        let r = check_commutativity(&g.program, &a, &b, wide().bounds).unwrap_or_else(|e| panic!("seed {seed}: {e}\n{}", g.source));
        assert!(r.converges(), "seed {seed}");
    }
}

const BYPASS: &str = r#"
context Leaf {
  field n: int = 0;
}
context Low owns [Leaf] {
  field n: int = 0;
  method bump() -> int { self.n = self.n + 1; return self.n; }
}
context Mid owns [Low, Leaf] {
  field low: Low;
  field n: int = 0;
  method touch() { self.n = self.n + self.low.bump(); }
}
context Top owns [Mid, Low] {
  field mid: Mid;
  field low: Low;
  field n: int = 0;
  method run() { self.n = self.low.bump(); self.mid.touch(); }
}
main {
  instance T: Top;
  instance M: Mid;
  instance L: Low;
  instance X: Leaf;
  own T -> M;
  own M -> L;
  own T -> L;
  own L -> X;
  own M -> X;
  set T.mid = M;
  set T.low = L;
  set M.low = L;
  event T.run();
  event L.bump();
}
"#;

#[test]
fn owner_bypassing_the_share_lub_does_not_deadlock() {
    let p = program(BYPASS);
    let report = explore(&p, EngineOptions::default(), wide()).unwrap();
    assert_eq!(report.verdict(), Verdict::Pass, "{report}");
}
