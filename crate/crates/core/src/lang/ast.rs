use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::value::Value;
use crate::graph::ContextId;

/// 1-based source position.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessMode {
    Ro,
    Ex,
}

impl fmt::Display for AccessMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccessMode::Ro => "ro",
            AccessMode::Ex => "ex",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Type {
    Int,
    Bool,
    Unit,
    Record,
    Ctx(String),
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Int => f.write_str("int"),
            Type::Bool => f.write_str("bool"),
            Type::Unit => f.write_str("unit"),
            Type::Record => f.write_str("record"),
            Type::Ctx(c) => f.write_str(c),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

/// Call-free expressions. Calls are hoisted into statements by the parser.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Expr {
    Lit(Value),
    Var(String),
    SelfRef,
    /// Field of the executing context.
    SelfField(String),
    /// Field of a record value.
    Get(Box<Expr>, String),
    Record(Vec<(String, Expr)>),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    /// Number of children of the given class.
    ChildCount(String),
    /// Whether the executing context directly owns the argument.
    Owns(Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CallKind {
    Sync,
    Async,
    Event,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OwnershipOp {
    Add,
    Remove,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StmtKind {
    Skip,
    /// `let x = e;` and `x = e;` both write the innermost frame.
    Assign(String, Expr),
    FieldUpdate(String, Expr),
    Call {
        dest: Option<String>,
        target: Expr,
        method: String,
        args: Vec<Expr>,
        kind: CallKind,
    },
    Return(Expr),
    If(Expr, Vec<Stmt>, Vec<Stmt>),
    Repeat(Expr, Vec<Stmt>),
    ForChildren {
        var: String,
        class: String,
        body: Vec<Stmt>,
    },
    Ownership(OwnershipOp, Expr, Expr),
    // Runtime-only forms below; the parser never produces them.
    /// Waiting for the synchronous call made to the given context.
    Waiting { dest: Option<String>, ctx: ContextId },
    Emit,
    /// Remaining iterations of a `repeat` with the body to run each time.
    Loop { remaining: u64, body: Vec<Stmt> },
    /// Bound iteration over a children snapshot.
    Each { var: String, items: Vec<ContextId>, body: Vec<Stmt> },
    /// A local call running in its own frame.
    Frame {
        dest: Option<String>,
        env: BTreeMap<String, Value>,
        body: Vec<Stmt>,
    },
}

impl Stmt {
    pub fn new(kind: StmtKind, span: Span) -> Self {
        Stmt { kind, span }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MethodDef {
    pub name: String,
    pub params: Vec<(String, Type)>,
    pub ret: Type,
    pub mode: AccessMode,
    pub body: Vec<Stmt>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDecl {
    pub name: String,
    pub ty: Type,
    pub init: Value,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDef {
    pub name: String,
    pub owns: Vec<String>,
    pub fields: Vec<FieldDecl>,
    pub methods: BTreeMap<String, Arc<MethodDef>>,
    pub span: Span,
}

impl ClassDef {
    pub fn field(&self, name: &str) -> Option<&FieldDecl> {
        self.fields.iter().find(|f| f.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceDecl {
    pub id: ContextId,
    pub class: String,
    pub inits: Vec<(String, Value)>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeDecl {
    pub parent: ContextId,
    pub child: ContextId,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSet {
    pub ctx: ContextId,
    pub field: String,
    pub value: Value,
    pub span: Span,
}

/// One client event of the main script.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EventSpec {
    pub target: ContextId,
    pub method: String,
    pub args: Vec<Value>,
    pub tick: u64,
    #[serde(skip)]
    pub span: Span,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MainScript {
    pub instances: Vec<InstanceDecl>,
    pub edges: Vec<EdgeDecl>,
    pub sets: Vec<FieldSet>,
    pub events: Vec<EventSpec>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub classes: BTreeMap<String, ClassDef>,
    pub main: MainScript,
}

impl Program {
    pub fn class(&self, name: &str) -> Option<&ClassDef> {
        self.classes.get(name)
    }

    pub fn method(&self, class: &str, method: &str) -> Option<&Arc<MethodDef>> {
        self.classes.get(class)?.methods.get(method)
    }

    /// Flattened `(class, method) -> MethodDef` view.
    pub fn method_table(&self) -> BTreeMap<(String, String), Arc<MethodDef>> {
        self.classes
            .values()
            .flat_map(|c| c.methods.values().map(move |m| ((c.name.clone(), m.name.clone()), m.clone())))
            .collect()
    }
}
