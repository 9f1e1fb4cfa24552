//! Class-level ownership constraints.
//!
//! Every context type a class mentions (field types, owned classes, call
//! effects) must sit strictly below it, except for the class itself.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextClassDecl {
    pub name: String,
    /// `(field name, type name)` pairs, context-typed fields included.
    pub field_types: Vec<(String, String)>,
    pub methods: Vec<String>,
    /// Context classes reachable from this class's fields and method effects.
    pub effect_set: BTreeSet<String>,
    /// 1-based source position of the declaration.
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClassDagVerdict {
    Accept,
    /// One cycle of the constraint graph, in traversal order.
    Reject { cycle: Vec<String> },
}

impl ClassDagVerdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, ClassDagVerdict::Accept)
    }
}

pub fn check_class_dag(decls: &[ContextClassDecl]) -> ClassDagVerdict {
    let known: BTreeSet<&str> = decls.iter().map(|d| d.name.as_str()).collect();
    let edges: BTreeMap<&str, Vec<&str>> = decls
        .iter()
        .map(|d| {
            let out = d
                .effect_set
                .iter()
                .map(String::as_str)
                .filter(|e| *e != d.name && known.contains(e))
                .collect();
            (d.name.as_str(), out)
        })
        .collect();

    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Unseen,
        OnStack,
        Done,
    }
    let mut mark: BTreeMap<&str, Mark> = known.iter().map(|k| (*k, Mark::Unseen)).collect();

    for &root in &known {
        if mark[root] != Mark::Unseen {
            continue;
        }
        // Iterative DFS keeping the current path for witness extraction.
        let mut path: Vec<&str> = vec![root];
        let mut cursor: Vec<usize> = vec![0];
        mark.insert(root, Mark::OnStack);
        while let Some(&node) = path.last() {
            let i = *cursor.last().unwrap();
            let succ = &edges[node];
            if i == succ.len() {
                mark.insert(node, Mark::Done);
                path.pop();
                cursor.pop();
                continue;
            }
            *cursor.last_mut().unwrap() += 1;
            let next = succ[i];
            match mark[next] {
                Mark::OnStack => {
                    let start = path.iter().position(|p| *p == next).unwrap();
                    let cycle = path[start..].iter().map(|s| s.to_string()).collect();
                    return ClassDagVerdict::Reject { cycle };
                }
                Mark::Unseen => {
                    mark.insert(next, Mark::OnStack);
                    path.push(next);
                    cursor.push(0);
                }
                Mark::Done => {}
            }
        }
    }
    ClassDagVerdict::Accept
}
