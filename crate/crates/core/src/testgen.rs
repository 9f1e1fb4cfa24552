//! Seeded random programs for property tests and the acceptance corpus.
//!
//! Contexts `C0..Cn` each get their own class `K0..Kn`. Ownership edges only
//! go from lower to higher indices, and methods only call descendants, so
//! programs are acyclic, terminate and pass the static checks.

use std::collections::BTreeSet;
use std::fmt::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graph::ContextId;
use crate::lang::{parse_program, EventSpec, Program};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenParams {
    pub max_contexts: usize,
    pub max_events: usize,
    pub max_stmts: usize,
    pub allow_async: bool,
    pub allow_nested: bool,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams { max_contexts: 5, max_events: 4, max_stmts: 6, allow_async: true, allow_nested: true }
    }
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub seed: u64,
    pub source: String,
    pub program: Program,
}

struct Shape {
    n: usize,
    parents: Vec<Vec<usize>>,
    init: Vec<i64>,
}

impl Shape {
    fn children(&self, i: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| self.parents[j].contains(&i)).collect()
    }

    fn descendants(&self, i: usize) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        let mut todo = self.children(i);
        while let Some(j) = todo.pop() {
            if out.insert(j) {
                todo.extend(self.children(j));
            }
        }
        out
    }
}

/// Random DAG over `n` nodes; `split` keeps nodes `< split` and `>= split`
/// in separate components.
fn random_shape(rng: &mut ChaCha8Rng, n: usize, split: Option<usize>) -> Shape {
    let mut parents = vec![Vec::new(); n];
    for (j, ps) in parents.iter_mut().enumerate().skip(1) {
        let lo = match split {
            Some(s) if j >= s => s,
            _ => 0,
        };
        if j == lo || rng.gen_bool(0.15) {
            continue;
        }
        let p = rng.gen_range(lo..j);
        ps.push(p);
        if j - lo >= 2 && rng.gen_bool(0.3) {
            let q = rng.gen_range(lo..j);
            if q != p {
                ps.push(q);
            }
        }
    }
    let init = (0..n).map(|_| rng.gen_range(0..5)).collect();
    Shape { n, parents, init }
}

fn method_body(rng: &mut ChaCha8Rng, shape: &Shape, i: usize, kind: char, p: &GenParams) -> String {
    let desc: Vec<usize> = shape.descendants(i).into_iter().collect();
    let budget = rng.gen_range(1..=p.max_stmts);
    let mut out = String::new();
    if kind == 'r' {
        let mut terms = vec!["self.a".to_string()];
        for k in 0..budget - 1 {
            match desc.choose(rng) {
                Some(j) if rng.gen_bool(0.6) => write!(out, " let s{k} = self.d{j}.r();").unwrap(),
                _ => write!(out, " let s{k} = self.b * 2;").unwrap(),
            }
            terms.push(format!("s{k}"));
        }
        write!(out, " return {};", terms.join(" + ")).unwrap();
        return out;
    }
    let plain = if kind == 'w' { budget - 1 } else { budget };
    // At most one asynchronous call, issued last, so an event's own
    // activations rarely race each other.
    let mut tail_async = None;
    for _ in 0..plain {
        let call = desc.choose(rng).copied();
        let roll = rng.gen_range(0..10);
        let stmt = match (roll, call) {
            (0..=1, Some(j)) => format!("self.b = self.b + self.d{j}.w();"),
            (2..=3, Some(j)) => format!("self.d{j}.u();"),
            (4, Some(j)) if p.allow_async && tail_async.is_none() => {
                tail_async = Some(j);
                continue;
            }
            (5, Some(j)) if p.allow_nested && rng.gen_bool(0.3) => format!("event self.d{j}.u();"),
            (6, Some(j)) => format!("self.a = self.a - self.d{j}.r();"),
            (7, _) => format!("if (self.a < {}) {{ self.b = self.b + 1; }} else {{ self.a = self.a - 1; }}", rng.gen_range(0..6)),
            (8, _) => "repeat (2) { self.a = self.a + 1; }".to_string(),
            (9, _) => "self.b = self.a - self.b;".to_string(),
            _ => format!("self.a = self.a + {};", rng.gen_range(1..4)),
        };
        write!(out, " {stmt}").unwrap();
    }
    if let Some(j) = tail_async {
        write!(out, " async self.d{j}.u();").unwrap();
    }
    if kind == 'w' {
        out.push_str(" return self.a;");
    }
    out
}

fn render(rng: &mut ChaCha8Rng, shape: &Shape, p: &GenParams) -> String {
    let mut src = String::new();
    for i in 0..shape.n {
        let owns: Vec<String> = shape.children(i).iter().map(|j| format!("K{j}")).collect();
        let owns = if owns.is_empty() { String::new() } else { format!(" owns [{}]", owns.join(", ")) };
        writeln!(src, "context K{i}{owns} {{").unwrap();
        writeln!(src, "  field a: int = {};", shape.init[i]).unwrap();
        writeln!(src, "  field b: int = 0;").unwrap();
        for j in shape.descendants(i) {
            writeln!(src, "  field d{j}: K{j};").unwrap();
        }
        writeln!(src, "  method w() -> int {{{} }}", method_body(rng, shape, i, 'w', p)).unwrap();
        writeln!(src, "  method u() {{{} }}", method_body(rng, shape, i, 'u', p)).unwrap();
        writeln!(src, "  ro method r() -> int {{{} }}", method_body(rng, shape, i, 'r', p)).unwrap();
        writeln!(src, "}}").unwrap();
    }
    writeln!(src, "main {{").unwrap();
    for i in 0..shape.n {
        writeln!(src, "  instance C{i}: K{i};").unwrap();
    }
    for j in 0..shape.n {
        for pa in &shape.parents[j] {
            writeln!(src, "  own C{pa} -> C{j};").unwrap();
        }
    }
    for i in 0..shape.n {
        for j in shape.descendants(i) {
            writeln!(src, "  set C{i}.d{j} = C{j};").unwrap();
        }
    }
    src
}

fn finish(seed: u64, mut src: String) -> Generated {
    src.push_str("}\n");
    let program = parse_program(&src).unwrap_or_else(|e| panic!("generated program does not parse: {e}\n{src}"));
    Generated { seed, source: src, program }
}

/// A random program with up to `max_events` client events in its main script.
pub fn random_program(seed: u64, p: &GenParams) -> Generated {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=p.max_contexts.max(2));
    let shape = random_shape(&mut rng, n, None);
    let mut src = render(&mut rng, &shape, p);
    for _ in 0..rng.gen_range(1..=p.max_events.max(1)) {
        let i = rng.gen_range(0..n);
        let m = ["w", "u", "r"].choose(&mut rng).unwrap();
        writeln!(src, "  event C{i}.{m}() @tick={};", rng.gen_range(0..2)).unwrap();
    }
    finish(seed, src)
}

/// A program with two events that can never act on a common context:
/// either two readonly events, or events in separate components.
pub fn independent_pair(seed: u64) -> (Generated, EventSpec, EventSpec) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = GenParams { max_contexts: 5, max_events: 2, max_stmts: 6, allow_async: false, allow_nested: false };
    let spec = |i: usize, m: &str| EventSpec {
        target: ContextId::new(format!("C{i}")),
        method: m.to_string(),
        args: vec![],
        tick: 0,
        span: Default::default(),
    };
    let n = rng.gen_range(2..=5);
    if rng.gen_bool(0.2) {
        let shape = random_shape(&mut rng, n, None);
        let src = render(&mut rng, &shape, &p);
        let i = rng.gen_range(0..n);
        return (finish(seed, src), spec(i, "r"), spec(i, "r"));
    }
    let split = rng.gen_range(1..n);
    let shape = random_shape(&mut rng, n, Some(split));
    let src = render(&mut rng, &shape, &p);
    let a = rng.gen_range(0..split);
    let b = rng.gen_range(split..n);
    let ma = ["w", "u", "r"].choose(&mut rng).unwrap();
    let mb = ["w", "u", "r"].choose(&mut rng).unwrap();
    (finish(seed, src), spec(a, ma), spec(b, mb))
}
