//! Lexer and recursive-descent parser for `.aeon` scenario files.
//!
//! Calls nested inside expressions are hoisted into preceding statements
//! bound to fresh temporaries, so every method body is in A-normal form.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use super::ast::*;
use super::value::Value;
use crate::graph::ContextId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: expected {expected}, found {found}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub expected: String,
    pub found: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Sym(&'static str),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(i) => format!("`{i}`"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

const SYMBOLS: &[&str] = &[
    "->", "==", "!=", "<=", ">=", "&&", "||", "{", "}", "(", ")", "[", "]", ";", ":", ",", ".", "=", "<",
    ">", "+", "-", "*", "/", "%", "!", "@",
];

fn lex(src: &str) -> Result<Vec<(Tok, Span)>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, c: char| {
        *i += 1;
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        let span = Span { line, col };
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, c);
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                { let ch = chars[i]; advance(&mut i, &mut line, &mut col, ch); }
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                s.push(chars[i]);
                { let ch = chars[i]; advance(&mut i, &mut line, &mut col, ch); }
            }
            out.push((Tok::Ident(s), span));
            continue;
        }
        if c.is_ascii_digit() {
            let mut s = String::new();
            while i < chars.len() && chars[i].is_ascii_digit() {
                s.push(chars[i]);
                { let ch = chars[i]; advance(&mut i, &mut line, &mut col, ch); }
            }
            let v = s.parse::<i64>().map_err(|_| ParseError {
                line: span.line,
                col: span.col,
                expected: "a 64-bit integer".into(),
                found: format!("`{s}`"),
            })?;
            out.push((Tok::Int(v), span));
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(sym) => {
                for _ in 0..sym.len() {
                    { let ch = chars[i]; advance(&mut i, &mut line, &mut col, ch); }
                }
                out.push((Tok::Sym(sym), span));
            }
            None => {
                return Err(ParseError {
                    line,
                    col,
                    expected: "a token".into(),
                    found: format!("`{c}`"),
                })
            }
        }
    }
    out.push((Tok::Eof, Span { line, col }));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
    temp: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].0
    }

    fn span(&self) -> Span {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, expected: &str) -> PResult<T> {
        let span = self.span();
        Err(ParseError {
            line: span.line,
            col: span.col,
            expected: expected.to_string(),
            found: self.peek().describe(),
        })
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == k)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.error(&format!("`{s}`"))
        }
    }

    fn eat_kw(&mut self, k: &str) -> bool {
        if self.is_kw(k) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, k: &str) -> PResult<()> {
        if self.eat_kw(k) {
            Ok(())
        } else {
            self.error(&format!("`{k}`"))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_reserved(&s) => {
                self.bump();
                Ok(s)
            }
            _ => self.error("an identifier"),
        }
    }

    fn fresh(&mut self) -> String {
        self.temp += 1;
        format!("__t{}", self.temp)
    }

    // ---- declarations ----

    fn program(&mut self) -> PResult<Program> {
        let mut program = Program::default();
        let mut saw_main = false;
        loop {
            match self.peek() {
                Tok::Eof => break,
                Tok::Ident(k) if k == "context" => {
                    let span = self.span();
                    let class = self.class()?;
                    if program.classes.contains_key(&class.name) {
                        return Err(ParseError {
                            line: span.line,
                            col: span.col,
                            expected: "a new class name".into(),
                            found: format!("duplicate class `{}`", class.name),
                        });
                    }
                    program.classes.insert(class.name.clone(), class);
                }
                Tok::Ident(k) if k == "main" && !saw_main => {
                    saw_main = true;
                    program.main = self.main_block()?;
                }
                _ => return self.error("`context` or `main`"),
            }
        }
        Ok(program)
    }

    fn class(&mut self) -> PResult<ClassDef> {
        let span = self.span();
        self.expect_kw("context")?;
        let name = self.ident()?;
        let mut owns = Vec::new();
        if self.eat_kw("owns") {
            self.expect_sym("[")?;
            if !self.is_sym("]") {
                owns.push(self.ident()?);
                while self.eat_sym(",") {
                    owns.push(self.ident()?);
                }
            }
            self.expect_sym("]")?;
        }
        self.expect_sym("{")?;
        let mut fields = Vec::new();
        let mut methods = BTreeMap::new();
        while !self.eat_sym("}") {
            let mspan = self.span();
            if self.eat_kw("field") {
                let fname = self.ident()?;
                self.expect_sym(":")?;
                let ty = self.ty()?;
                let init = if self.eat_sym("=") { self.literal()? } else { default_value(&ty) };
                self.expect_sym(";")?;
                fields.push(FieldDecl { name: fname, ty, init, span: mspan });
            } else if self.is_kw("ro") || self.is_kw("method") {
                let m = self.method()?;
                if methods.contains_key(&m.name) {
                    return Err(ParseError {
                        line: mspan.line,
                        col: mspan.col,
                        expected: "a new method name".into(),
                        found: format!("duplicate method `{}`", m.name),
                    });
                }
                methods.insert(m.name.clone(), Arc::new(m));
            } else {
                return self.error("`field`, `method`, `ro` or `}`");
            }
        }
        Ok(ClassDef { name, owns, fields, methods, span })
    }

    fn ty(&mut self) -> PResult<Type> {
        let name = self.ident_any()?;
        Ok(match name.as_str() {
            "int" => Type::Int,
            "bool" => Type::Bool,
            "unit" => Type::Unit,
            "record" => Type::Record,
            _ => Type::Ctx(name),
        })
    }

    fn ident_any(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => self.error("a type name"),
        }
    }

    fn method(&mut self) -> PResult<MethodDef> {
        let span = self.span();
        let mode = if self.eat_kw("ro") { AccessMode::Ro } else { AccessMode::Ex };
        self.expect_kw("method")?;
        let name = self.ident()?;
        self.expect_sym("(")?;
        let mut params = Vec::new();
        if !self.is_sym(")") {
            loop {
                let p = self.ident()?;
                self.expect_sym(":")?;
                params.push((p, self.ty()?));
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        self.expect_sym(")")?;
        let ret = if self.eat_sym("->") { self.ty()? } else { Type::Unit };
        self.temp = 0;
        let mut body = self.block()?;
        let end = self.toks[self.pos.saturating_sub(1)].1;
        body.push(Stmt::new(StmtKind::Return(Expr::Lit(Value::Unit)), end));
        Ok(MethodDef { name, params, ret, mode, body, span })
    }

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect_sym("{")?;
        let mut out = Vec::new();
        while !self.eat_sym("}") {
            if matches!(self.peek(), Tok::Eof) {
                return self.error("`}`");
            }
            self.stmt(&mut out)?;
        }
        Ok(out)
    }

    // ---- statements ----

    fn stmt(&mut self, out: &mut Vec<Stmt>) -> PResult<()> {
        let span = self.span();
        let push = |out: &mut Vec<Stmt>, k| out.push(Stmt::new(k, span));
        if self.eat_kw("skip") {
            self.expect_sym(";")?;
            push(out, StmtKind::Skip);
        } else if self.eat_kw("let") {
            let x = self.ident()?;
            self.expect_sym("=")?;
            self.assign_rhs(out, x, span)?;
            self.expect_sym(";")?;
        } else if self.eat_kw("return") {
            let e = if self.is_sym(";") { Expr::Lit(Value::Unit) } else { self.expr(out, span)? };
            self.expect_sym(";")?;
            push(out, StmtKind::Return(e));
        } else if self.eat_kw("if") {
            self.if_tail(out, span)?;
        } else if self.eat_kw("repeat") {
            self.expect_sym("(")?;
            let n = self.expr(out, span)?;
            self.expect_sym(")")?;
            let body = self.block()?;
            push(out, StmtKind::Repeat(n, body));
        } else if self.eat_kw("for") {
            let var = self.ident()?;
            self.expect_kw("in")?;
            let class = self.children_ref()?;
            let body = self.block()?;
            push(out, StmtKind::ForChildren { var, class, body });
        } else if self.is_kw("add_ownership") || self.is_kw("remove_ownership") {
            let op = if self.eat_kw("add_ownership") {
                OwnershipOp::Add
            } else {
                self.bump();
                OwnershipOp::Remove
            };
            self.expect_sym("(")?;
            let a = self.expr(out, span)?;
            self.expect_sym(",")?;
            let b = self.expr(out, span)?;
            self.expect_sym(")")?;
            self.expect_sym(";")?;
            push(out, StmtKind::Ownership(op, a, b));
        } else if self.is_kw("async") || self.is_kw("event") {
            let kind = if self.eat_kw("async") {
                CallKind::Async
            } else {
                self.bump();
                CallKind::Event
            };
            let (target, method, args) = self.call_expr(out, span)?;
            self.expect_sym(";")?;
            push(out, StmtKind::Call { dest: None, target, method, args, kind });
        } else if self.is_kw("self") && matches!(self.peek_at(1), Tok::Sym(".")) && matches!(self.peek_at(3), Tok::Sym("=")) {
            self.bump();
            self.bump();
            let f = self.ident()?;
            self.expect_sym("=")?;
            let e = self.expr(out, span)?;
            self.expect_sym(";")?;
            push(out, StmtKind::FieldUpdate(f, e));
        } else if matches!(self.peek(), Tok::Ident(_)) && matches!(self.peek_at(1), Tok::Sym("=")) {
            let x = self.ident()?;
            self.bump();
            self.assign_rhs(out, x, span)?;
            self.expect_sym(";")?;
        } else {
            // Expression statement: must be a call.
            let before = out.len();
            let e = self.expr(out, span)?;
            self.expect_sym(";")?;
            let grew = out.len() > before;
            match (&e, out.last_mut()) {
                (Expr::Var(t), Some(last)) if grew && t.starts_with("__t") => {
                    if let StmtKind::Call { dest, .. } = &mut last.kind {
                        if dest.as_deref() == Some(t.as_str()) {
                            *dest = None;
                            return Ok(());
                        }
                    }
                    return self.error_at(span, "a statement", "an expression");
                }
                _ => return self.error_at(span, "a statement", "an expression"),
            }
        }
        Ok(())
    }

    fn error_at<T>(&self, span: Span, expected: &str, found: &str) -> PResult<T> {
        Err(ParseError { line: span.line, col: span.col, expected: expected.into(), found: found.into() })
    }

    fn assign_rhs(&mut self, out: &mut Vec<Stmt>, x: String, span: Span) -> PResult<()> {
        let before = out.len();
        let e = self.expr(out, span)?;
        // `let y = t.m(..)` binds the call result directly.
        if let (Expr::Var(t), true) = (&e, out.len() > before) {
            if let Some(Stmt { kind: StmtKind::Call { dest, .. }, .. }) = out.last_mut() {
                if dest.as_deref() == Some(t.as_str()) && t.starts_with("__t") {
                    *dest = Some(x);
                    return Ok(());
                }
            }
        }
        out.push(Stmt::new(StmtKind::Assign(x, e), span));
        Ok(())
    }

    fn if_tail(&mut self, out: &mut Vec<Stmt>, span: Span) -> PResult<()> {
        self.expect_sym("(")?;
        let c = self.expr(out, span)?;
        self.expect_sym(")")?;
        let then = self.block()?;
        let els = if self.eat_kw("else") {
            if self.is_kw("if") {
                let inner_span = self.span();
                self.bump();
                let mut nested = Vec::new();
                self.if_tail(&mut nested, inner_span)?;
                nested
            } else {
                self.block()?
            }
        } else {
            Vec::new()
        };
        out.push(Stmt::new(StmtKind::If(c, then, els), span));
        Ok(())
    }

    fn children_ref(&mut self) -> PResult<String> {
        self.expect_kw("children")?;
        self.expect_sym("[")?;
        let c = self.ident()?;
        self.expect_sym("]")?;
        Ok(c)
    }

    fn call_expr(&mut self, out: &mut Vec<Stmt>, span: Span) -> PResult<(Expr, String, Vec<Expr>)> {
        let target = self.target()?;
        self.expect_sym(".")?;
        let method = self.ident()?;
        let args = self.args(out, span)?;
        Ok((target, method, args))
    }

    /// `x`, `self` or `self.f`.
    fn target(&mut self) -> PResult<Expr> {
        if self.eat_kw("self") {
            if matches!(self.peek_at(1), Tok::Ident(_)) && matches!(self.peek_at(2), Tok::Sym(".")) && self.is_sym(".") {
                self.bump();
                let f = self.ident()?;
                return Ok(Expr::SelfField(f));
            }
            return Ok(Expr::SelfRef);
        }
        Ok(Expr::Var(self.ident()?))
    }

    fn args(&mut self, out: &mut Vec<Stmt>, span: Span) -> PResult<Vec<Expr>> {
        self.expect_sym("(")?;
        let mut args = Vec::new();
        if !self.is_sym(")") {
            loop {
                args.push(self.expr(out, span)?);
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        self.expect_sym(")")?;
        Ok(args)
    }

    // ---- expressions ----

    fn expr(&mut self, out: &mut Vec<Stmt>, span: Span) -> PResult<Expr> {
        self.binary(out, span, 0)
    }

    fn binary(&mut self, out: &mut Vec<Stmt>, span: Span, level: usize) -> PResult<Expr> {
        const LEVELS: &[&[(&str, BinOp)]] = &[
            &[("||", BinOp::Or)],
            &[("&&", BinOp::And)],
            &[("==", BinOp::Eq), ("!=", BinOp::Ne)],
            &[("<=", BinOp::Le), (">=", BinOp::Ge), ("<", BinOp::Lt), (">", BinOp::Gt)],
            &[("+", BinOp::Add), ("-", BinOp::Sub)],
            &[("*", BinOp::Mul), ("/", BinOp::Div), ("%", BinOp::Rem)],
        ];
        if level == LEVELS.len() {
            return self.unary(out, span);
        }
        let mut lhs = self.binary(out, span, level + 1)?;
        'outer: loop {
            for (sym, op) in LEVELS[level] {
                if self.eat_sym(sym) {
                    let rhs = self.binary(out, span, level + 1)?;
                    lhs = Expr::Binary(*op, Box::new(lhs), Box::new(rhs));
                    continue 'outer;
                }
            }
            return Ok(lhs);
        }
    }

    fn unary(&mut self, out: &mut Vec<Stmt>, span: Span) -> PResult<Expr> {
        if self.eat_sym("-") {
            if let Tok::Int(i) = self.peek().clone() {
                self.bump();
                return Ok(Expr::Lit(Value::Int(-i)));
            }
            return Ok(Expr::Unary(UnOp::Neg, Box::new(self.unary(out, span)?)));
        }
        if self.eat_sym("!") {
            return Ok(Expr::Unary(UnOp::Not, Box::new(self.unary(out, span)?)));
        }
        self.postfix(out, span)
    }

    fn postfix(&mut self, out: &mut Vec<Stmt>, span: Span) -> PResult<Expr> {
        let mut e = self.primary(out, span)?;
        while self.eat_sym(".") {
            let name = self.ident()?;
            if self.is_sym("(") {
                let target = match e {
                    Expr::Var(_) | Expr::SelfRef | Expr::SelfField(_) => e,
                    _ => return self.error_at(span, "a call target (variable, `self` or `self.field`)", "an expression"),
                };
                let args = self.args(out, span)?;
                let t = self.fresh();
                out.push(Stmt::new(
                    StmtKind::Call { dest: Some(t.clone()), target, method: name, args, kind: CallKind::Sync },
                    span,
                ));
                e = Expr::Var(t);
            } else {
                e = match e {
                    Expr::SelfRef => Expr::SelfField(name),
                    other => Expr::Get(Box::new(other), name),
                };
            }
        }
        Ok(e)
    }

    fn primary(&mut self, out: &mut Vec<Stmt>, span: Span) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Int(i) => {
                self.bump();
                Ok(Expr::Lit(Value::Int(i)))
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr(out, span)?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Sym("{") => {
                self.bump();
                let mut fields = Vec::new();
                if !self.is_sym("}") {
                    loop {
                        let f = self.ident()?;
                        self.expect_sym(":")?;
                        fields.push((f, self.expr(out, span)?));
                        if !self.eat_sym(",") {
                            break;
                        }
                    }
                }
                self.expect_sym("}")?;
                Ok(Expr::Record(fields))
            }
            Tok::Ident(k) => match k.as_str() {
                "true" => {
                    self.bump();
                    Ok(Expr::Lit(Value::Bool(true)))
                }
                "false" => {
                    self.bump();
                    Ok(Expr::Lit(Value::Bool(false)))
                }
                "unit" => {
                    self.bump();
                    Ok(Expr::Lit(Value::Unit))
                }
                "self" => {
                    self.bump();
                    Ok(Expr::SelfRef)
                }
                "size" => {
                    self.bump();
                    self.expect_sym("(")?;
                    let c = self.children_ref()?;
                    self.expect_sym(")")?;
                    Ok(Expr::ChildCount(c))
                }
                "owns" => {
                    self.bump();
                    self.expect_sym("(")?;
                    let e = self.expr(out, span)?;
                    self.expect_sym(")")?;
                    Ok(Expr::Owns(Box::new(e)))
                }
                _ => Ok(Expr::Var(self.ident()?)),
            },
            _ => self.error("an expression"),
        }
    }

    // ---- main block ----

    fn literal(&mut self) -> PResult<Value> {
        match self.peek().clone() {
            Tok::Int(i) => {
                self.bump();
                Ok(Value::Int(i))
            }
            Tok::Sym("-") => {
                self.bump();
                match self.bump() {
                    Tok::Int(i) => Ok(Value::Int(-i)),
                    _ => self.error("an integer"),
                }
            }
            Tok::Sym("{") => {
                self.bump();
                let mut m = BTreeMap::new();
                if !self.is_sym("}") {
                    loop {
                        let f = self.ident()?;
                        self.expect_sym(":")?;
                        m.insert(f, self.literal()?);
                        if !self.eat_sym(",") {
                            break;
                        }
                    }
                }
                self.expect_sym("}")?;
                Ok(Value::Record(m))
            }
            Tok::Ident(k) => {
                self.bump();
                Ok(match k.as_str() {
                    "true" => Value::Bool(true),
                    "false" => Value::Bool(false),
                    "unit" | "null" => Value::Unit,
                    _ => Value::Ctx(ContextId::new(k)),
                })
            }
            _ => self.error("a literal"),
        }
    }

    fn main_block(&mut self) -> PResult<MainScript> {
        self.expect_kw("main")?;
        self.expect_sym("{")?;
        let mut main = MainScript::default();
        while !self.eat_sym("}") {
            let span = self.span();
            if self.eat_kw("instance") {
                let id = ContextId::new(self.ident()?);
                self.expect_sym(":")?;
                let class = self.ident()?;
                let mut inits = Vec::new();
                if self.eat_sym("{") {
                    if !self.is_sym("}") {
                        loop {
                            let f = self.ident()?;
                            self.expect_sym("=")?;
                            inits.push((f, self.literal()?));
                            if !self.eat_sym(",") {
                                break;
                            }
                        }
                    }
                    self.expect_sym("}")?;
                }
                self.expect_sym(";")?;
                main.instances.push(InstanceDecl { id, class, inits, span });
            } else if self.eat_kw("own") {
                let parent = ContextId::new(self.ident()?);
                self.expect_sym("->")?;
                let child = ContextId::new(self.ident()?);
                self.expect_sym(";")?;
                main.edges.push(EdgeDecl { parent, child, span });
            } else if self.eat_kw("set") {
                let ctx = ContextId::new(self.ident()?);
                self.expect_sym(".")?;
                let field = self.ident()?;
                self.expect_sym("=")?;
                let value = self.literal()?;
                self.expect_sym(";")?;
                main.sets.push(FieldSet { ctx, field, value, span });
            } else if self.eat_kw("event") {
                let target = ContextId::new(self.ident()?);
                self.expect_sym(".")?;
                let method = self.ident()?;
                self.expect_sym("(")?;
                let mut args = Vec::new();
                if !self.is_sym(")") {
                    loop {
                        args.push(self.literal()?);
                        if !self.eat_sym(",") {
                            break;
                        }
                    }
                }
                self.expect_sym(")")?;
                let mut tick = 0;
                if self.eat_sym("@") {
                    self.expect_kw("tick")?;
                    self.expect_sym("=")?;
                    match self.bump() {
                        Tok::Int(t) if t >= 0 => tick = t as u64,
                        _ => return self.error("a non-negative tick"),
                    }
                }
                self.expect_sym(";")?;
                main.events.push(EventSpec { target, method, args, tick, span });
            } else if matches!(self.peek(), Tok::Eof) {
                return self.error("`}`");
            } else {
                return self.error("`instance`, `own`, `set`, `event` or `}`");
            }
        }
        Ok(main)
    }
}

fn is_reserved(s: &str) -> bool {
    matches!(
        s,
        "context" | "owns" | "field" | "method" | "ro" | "let" | "return" | "if" | "else" | "repeat" | "for"
            | "in" | "children" | "async" | "event" | "skip" | "self" | "true" | "false" | "unit" | "size"
            | "main" | "add_ownership" | "remove_ownership"
    )
}

pub fn default_value(ty: &Type) -> Value {
    match ty {
        Type::Int => Value::Int(0),
        Type::Bool => Value::Bool(false),
        Type::Record => Value::Record(BTreeMap::new()),
        Type::Unit | Type::Ctx(_) => Value::Unit,
    }
}

pub fn parse_program(src: &str) -> Result<Program, ParseError> {
    let toks = lex(src)?;
    Parser { toks, pos: 0, temp: 0 }.program()
}
