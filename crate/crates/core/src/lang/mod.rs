//! The context language: syntax, static checks and the intra-context machine.

pub mod ast;
pub mod check;
pub mod intra;
pub mod parse;
pub mod value;

pub use ast::{AccessMode, CallKind, EventSpec, Expr, MethodDef, OwnershipOp, Program, Span, Stmt, StmtKind, Type};
pub use check::{check_program, check_readonly, class_decls, CheckReport, Diagnostic, DiagnosticKind};
pub use intra::{
    eval_expr, resume_with_return, step_intra, Env, Host, IntraConfig, IntraError, Label, Store,
};
pub use parse::{parse_program, ParseError};
pub use value::Value;

#[cfg(test)]
mod tests;
