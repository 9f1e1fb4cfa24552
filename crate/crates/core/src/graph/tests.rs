use std::collections::BTreeSet;

use proptest::prelude::*;

use super::*;

fn id(s: &str) -> ContextId {
    ContextId::new(s)
}

fn set(xs: &[&str]) -> BTreeSet<ContextId> {
    xs.iter().map(|s| id(s)).collect()
}

fn game() -> OwnershipGraph {
    let mut g = OwnershipGraph::new();
    for (n, c) in [
        ("Castle", "Building"),
        ("KingsRoom", "Room"),
        ("Armory", "Room"),
        ("Player1", "Player"),
        ("Player2", "Player"),
        ("Player3", "Player"),
        ("Treasure", "Item"),
        ("Horse", "Item"),
        ("Sword", "Item"),
    ] {
        g.add_context(id(n), c).unwrap();
    }
    for (p, c) in [
        ("Castle", "KingsRoom"),
        ("Castle", "Armory"),
        ("KingsRoom", "Player1"),
        ("KingsRoom", "Player2"),
        ("KingsRoom", "Treasure"),
        ("Armory", "Player3"),
        ("Armory", "Sword"),
        ("Player1", "Treasure"),
        ("Player1", "Horse"),
        ("Player2", "Treasure"),
        ("Player2", "Horse"),
        ("Player3", "Sword"),
    ] {
        g.add_ownership(&id(p), &id(c)).unwrap();
    }
    g
}

#[test]
fn game_children_and_descendants() {
    let g = game();
    assert_eq!(g.children(&id("Castle")).unwrap(), &set(&["KingsRoom", "Armory"]));
    assert!(g.children(&id("Sword")).unwrap().is_empty());
    let d = g.descendants(&id("Castle")).unwrap();
    assert_eq!(d.len(), 8);
    assert!(!d.contains(&id("Castle")));
    assert!(matches!(g.children(&id("Nope")), Err(GraphError::UnknownContext(_))));
}

#[test]
fn game_share_and_dominators() {
    let g = game();
    let s = g.share(&id("Player1")).unwrap();
    assert!(s.contains(&id("Player2")));
    assert!(s.contains(&id("KingsRoom")));
    assert_eq!(g.dominator(&id("Player1")).unwrap(), &id("KingsRoom"));
    assert_eq!(g.dominator(&id("Player2")).unwrap(), &id("KingsRoom"));
    assert_eq!(g.dominator(&id("Sword")).unwrap(), &id("Sword"));
    assert_eq!(g.dominator(&id("Horse")).unwrap(), &id("Horse"));
    assert_eq!(g.dominator(&id("Player3")).unwrap(), &id("Armory"));
    assert_eq!(g.dominator(&id("Castle")).unwrap(), &id("Castle"));
    assert!(g.dominator_cache_consistent());
}

#[test]
fn owner_that_bypasses_the_share_lub_is_covered() {
    // Top reaches Low directly as well as through Mid, and Low has a child.
    let mut g = OwnershipGraph::new();
    for n in ["Top", "Mid", "Low", "Leaf"] {
        g.add_context(id(n), "K").unwrap();
    }
    for (p, c) in [("Top", "Mid"), ("Mid", "Low"), ("Top", "Low"), ("Low", "Leaf"), ("Mid", "Leaf")] {
        g.add_ownership(&id(p), &id(c)).unwrap();
    }
    assert_eq!(g.share(&id("Low")).unwrap(), set(&["Low", "Mid"]));
    assert_eq!(g.dominator(&id("Low")).unwrap(), &id("Top"));
    // A leaf keeps itself as dominator even with several owners.
    assert_eq!(g.dominator(&id("Leaf")).unwrap(), &id("Leaf"));
    assert!(g.dominator_cache_consistent());
}

#[test]
fn lub_examples() {
    let mut g = game();
    assert_eq!(g.lub(&set(&["Player1", "Player2", "KingsRoom"])).unwrap(), id("KingsRoom"));
    assert_eq!(g.lub(&set(&["Sword"])).unwrap(), id("Sword"));
    assert_eq!(g.lub(&set(&["Sword", "Horse"])).unwrap(), id("Castle"));
    assert!(g.virtual_nodes().is_empty());
}

#[test]
fn disjoint_roots_get_one_memoized_virtual_node() {
    let mut g = OwnershipGraph::new();
    for n in ["A", "B", "X"] {
        g.add_context(id(n), "K").unwrap();
    }
    g.add_ownership(&id("A"), &id("X")).unwrap();
    g.add_ownership(&id("B"), &id("X")).unwrap();
    // A and B share X and have no common ancestor.
    let d = g.dominator(&id("A")).unwrap().clone();
    assert!(g.is_virtual(&d));
    assert_eq!(g.dominator(&id("B")).unwrap(), &d);
    let again = g.lub(&set(&["A", "B"])).unwrap();
    assert_eq!(again, d);
    let reversed = g.lub(&set(&["B", "A"])).unwrap();
    assert_eq!(reversed, d);
    assert_eq!(g.virtual_nodes().len(), 1);
    assert!(g.share(&id("A")).unwrap().iter().all(|x| !g.is_virtual(x)));
}

#[test]
fn ownership_moves_update_dominators() {
    let mut g = game();
    g.remove_ownership(&id("KingsRoom"), &id("Player1")).unwrap();
    g.add_ownership(&id("Armory"), &id("Player1")).unwrap();
    // Player1 and Player2 still share Treasure and Horse, now across rooms.
    assert_eq!(g.dominator(&id("Player1")).unwrap(), &id("Castle"));
    assert_eq!(g.dominator(&id("Player2")).unwrap(), &id("Castle"));
    assert!(g.dominator_cache_consistent());
}

#[test]
fn ownership_errors() {
    let mut g = game();
    assert!(matches!(
        g.add_ownership(&id("Sword"), &id("Sword")),
        Err(GraphError::Cycle { .. })
    ));
    assert!(matches!(
        g.add_ownership(&id("Treasure"), &id("Castle")),
        Err(GraphError::Cycle { .. })
    ));
    assert!(matches!(
        g.remove_ownership(&id("Armory"), &id("Horse")),
        Err(GraphError::MissingEdge { .. })
    ));
}

#[test]
fn removing_a_leafs_only_edge_leaves_it_self_dominated() {
    let mut g = game();
    g.remove_ownership(&id("Player3"), &id("Sword")).unwrap();
    g.remove_ownership(&id("Armory"), &id("Sword")).unwrap();
    assert!(g.contains(&id("Sword")));
    assert_eq!(g.dominator(&id("Sword")).unwrap(), &id("Sword"));
}

#[test]
fn dump_round_trip() {
    let g = game();
    let text = g.dump();
    assert_eq!(text.lines().count(), 9 + 12);
    let h = OwnershipGraph::load(&text).unwrap();
    assert_eq!(g, h);
    assert_eq!(h.dominators(), g.dominators());
    let err = OwnershipGraph::load("{\"kind\":\"node\"}\n").unwrap_err();
    assert!(err.to_string().starts_with("line 1"));
}

#[test]
fn class_dag_checks() {
    let decl = |name: &str, eff: &[&str]| ContextClassDecl {
        name: name.into(),
        field_types: vec![],
        methods: vec![],
        effect_set: eff.iter().map(|s| s.to_string()).collect(),
        line: 1,
        col: 1,
    };
    let game = [
        decl("Building", &["Room"]),
        decl("Room", &["Player", "Item"]),
        decl("Player", &["Item"]),
        decl("Item", &[]),
    ];
    assert!(check_class_dag(&game).is_accept());
    assert!(check_class_dag(&[decl("A", &["A"])]).is_accept());
    assert_eq!(
        check_class_dag(&[decl("A", &["B"]), decl("B", &["A"])]),
        ClassDagVerdict::Reject { cycle: vec!["A".into(), "B".into()] }
    );
    assert!(check_class_dag(&[]).is_accept());
}

// ---- oracles over random DAGs ----

fn closure_oracle(edges: &BTreeSet<(usize, usize)>, c: usize) -> BTreeSet<usize> {
    let mut out: BTreeSet<usize> = edges.iter().filter(|(p, _)| *p == c).map(|(_, k)| *k).collect();
    loop {
        let next: BTreeSet<usize> = edges
            .iter()
            .filter(|(p, _)| out.contains(p))
            .map(|(_, k)| *k)
            .chain(out.iter().copied())
            .collect();
        if next == out {
            return out;
        }
        out = next;
    }
}

fn share_oracle(n: usize, edges: &BTreeSet<(usize, usize)>, c: usize) -> BTreeSet<usize> {
    let desc: Vec<BTreeSet<usize>> = (0..n).map(|x| closure_oracle(edges, x)).collect();
    let mut out = BTreeSet::new();
    for x in 0..n {
        let kids: BTreeSet<usize> = edges.iter().filter(|(p, _)| *p == x).map(|(_, k)| *k).collect();
        if !kids.is_disjoint(&desc[c]) {
            out.insert(x);
        }
        let incomparable = x != c && !desc[c].contains(&x) && !desc[x].contains(&c);
        if incomparable && !desc[x].is_disjoint(&desc[c]) {
            out.insert(x);
        }
    }
    out
}

fn name(i: usize) -> ContextId {
    ContextId::new(format!("n{i:02}"))
}

/// Edges only from lower to higher index, so the result is always a DAG.
fn arb_dag(max: usize) -> impl Strategy<Value = (usize, BTreeSet<(usize, usize)>)> {
    (2..=max).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> =
            (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        let len = pairs.len();
        (Just(n), proptest::collection::vec(any::<bool>(), len)).prop_map(move |(n, keep)| {
            let edges = pairs
                .iter()
                .zip(keep)
                .filter(|(_, k)| *k)
                .map(|(e, _)| *e)
                .filter(|(a, b)| (a * 7 + b * 3) % 3 != 0)
                .collect();
            (n, edges)
        })
    })
}

fn build(n: usize, edges: &BTreeSet<(usize, usize)>) -> OwnershipGraph {
    let mut g = OwnershipGraph::new();
    for i in 0..n {
        g.add_context(name(i), "K").unwrap();
    }
    for (a, b) in edges {
        g.add_ownership(&name(*a), &name(*b)).unwrap();
    }
    g
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn children_descendants_share_match_oracles((n, edges) in arb_dag(20)) {
        let g = build(n, &edges);
        for c in 0..n {
            let kids: BTreeSet<ContextId> = edges.iter().filter(|(p, _)| *p == c).map(|(_, k)| name(*k)).collect();
            prop_assert_eq!(g.children(&name(c)).unwrap(), &kids);
            let desc: BTreeSet<ContextId> = closure_oracle(&edges, c).into_iter().map(name).collect();
            prop_assert_eq!(g.descendants(&name(c)).unwrap(), desc);
            let share: BTreeSet<ContextId> = share_oracle(n, &edges, c).into_iter().map(name).collect();
            prop_assert_eq!(g.share(&name(c)).unwrap(), share);
        }
    }

    #[test]
    fn dominators_are_upper_bounds_and_cache_is_fresh((n, edges) in arb_dag(12)) {
        let g = build(n, &edges);
        prop_assert!(g.is_acyclic());
        prop_assert!(g.dominator_cache_consistent());
        for c in 0..n {
            let c = name(c);
            let d = g.dominator(&c).unwrap();
            prop_assert!(g.is_virtual(d) || g.is_ancestor_or_self(d, &c));
            prop_assert!(g.is_ancestor_or_self(d, &c));
            for x in g.share(&c).unwrap() {
                prop_assert!(g.is_ancestor_or_self(d, &x));
            }
            if !g.descendants(&c).unwrap().is_empty() {
                for p in g.parents(&c).unwrap() {
                    prop_assert!(g.is_ancestor_or_self(d, p));
                }
            }
        }
    }

    #[test]
    fn lub_is_a_minimal_common_ancestor(
        (n, edges) in arb_dag(12),
        picks in proptest::collection::btree_set(0usize..12, 1..4),
    ) {
        let mut g = build(n, &edges);
        let s: BTreeSet<ContextId> = picks.into_iter().filter(|p| *p < n).map(name).collect();
        prop_assume!(!s.is_empty());
        let u = g.lub(&s).unwrap();
        prop_assert!(s.iter().all(|x| g.is_ancestor_or_self(&u, x)));
        // Enumerate the common ancestors that existed before the query.
        let common: Vec<ContextId> = g
            .real_nodes()
            .filter(|a| s.iter().all(|x| g.is_ancestor_or_self(a, x)))
            .cloned()
            .collect();
        let minimal: Vec<&ContextId> = common
            .iter()
            .filter(|a| !common.iter().any(|b| b != *a && g.is_ancestor_or_self(a, b)))
            .collect();
        if minimal.len() == 1 {
            prop_assert_eq!(&u, minimal[0]);
        } else {
            for m in minimal {
                prop_assert!(g.is_ancestor_or_self(&u, m));
            }
        }
        let again = g.lub(&s).unwrap();
        prop_assert_eq!(again, u);
    }

    #[test]
    fn random_mutations_keep_cache_consistent(
        (n, edges) in arb_dag(10),
        ops in proptest::collection::vec((0usize..10, 0usize..10, any::<bool>()), 1..8),
    ) {
        let mut g = build(n, &edges);
        for (a, b, add) in ops {
            if a >= n || b >= n {
                continue;
            }
            let (pa, cb) = (name(a), name(b));
            let r = if add { g.add_ownership(&pa, &cb) } else { g.remove_ownership(&pa, &cb) };
            if add && r.is_err() {
                prop_assert!(g.is_ancestor_or_self(&cb, &pa));
            }
            prop_assert!(g.is_acyclic());
            prop_assert!(g.dominator_cache_consistent());
        }
    }
}
