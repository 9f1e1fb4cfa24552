//! Ownership-DAG context runtime.
//!
//! Contexts form a DAG of ownership. Events run atomically across many
//! contexts, sequenced at the dominator of their target so that conflicting
//! events are serialized and no lock cycle can form.

pub mod engine;
pub mod graph;
pub mod lang;
pub mod testgen;
pub mod verifier;
