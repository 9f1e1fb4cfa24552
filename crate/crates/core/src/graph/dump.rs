//! Line-delimited JSON dump of the real part of a graph.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ContextId, GraphError, OwnershipGraph};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GraphRecord {
    Node { id: ContextId, class: String },
    Edge { parent: ContextId, child: ContextId },
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("line {line}: {source}")]
    Syntax {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {source}")]
    Graph {
        line: usize,
        #[source]
        source: GraphError,
    },
}

impl OwnershipGraph {
    /// Nodes first, then edges, both sorted; virtual nodes are omitted.
    pub fn dump_records(&self) -> Vec<GraphRecord> {
        let mut out: Vec<GraphRecord> = self
            .classes
            .iter()
            .filter_map(|(id, c)| {
                c.as_ref().map(|class| GraphRecord::Node { id: id.clone(), class: class.clone() })
            })
            .collect();
        for (p, c) in self.edges() {
            if !self.is_virtual(p) {
                out.push(GraphRecord::Edge { parent: p.clone(), child: c.clone() });
            }
        }
        out
    }

    pub fn dump(&self) -> String {
        let mut s = String::new();
        for r in self.dump_records() {
            s.push_str(&serde_json::to_string(&r).expect("records serialize"));
            s.push('\n');
        }
        s
    }

    pub fn from_records<'a>(
        records: impl IntoIterator<Item = &'a GraphRecord>,
    ) -> Result<Self, GraphError> {
        let mut g = OwnershipGraph::new();
        let mut edges = Vec::new();
        for r in records {
            match r {
                GraphRecord::Node { id, class } => g.add_context(id.clone(), class.clone())?,
                GraphRecord::Edge { parent, child } => edges.push((parent.clone(), child.clone())),
            }
        }
        g.add_edges_bulk(&edges)?;
        Ok(g)
    }

    pub fn load(text: &str) -> Result<Self, LoadError> {
        let mut g = OwnershipGraph::new();
        let mut edges = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let rec: GraphRecord = serde_json::from_str(line)
                .map_err(|source| LoadError::Syntax { line: line_no, source })?;
            match rec {
                GraphRecord::Node { id, class } => g
                    .add_context(id, class)
                    .map_err(|source| LoadError::Graph { line: line_no, source })?,
                GraphRecord::Edge { parent, child } => edges.push((line_no, parent, child)),
            }
        }
        for (line, p, c) in &edges {
            g.insert_edge_unchecked(p, c)
                .map_err(|source| LoadError::Graph { line: *line, source })?;
        }
        g.recompute_all_dominators();
        Ok(g)
    }
}
