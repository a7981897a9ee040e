//! Recursive-descent parser for WhileLang.
//!
//! ```text
//! program  := decl* func+
//! decl     := type ident ('=' literal)? ';'
//! func     := type ident '(' params? ')' block
//! params   := type ident (',' type ident)*
//! block    := '{' stmt* '}'
//! stmt     := type ident ('=' (expr | call))? ';'
//!           | ident '=' (expr | call) ';'
//!           | call ';'
//!           | 'if' '(' expr ')' block ('else' (block | if-stmt))?
//!           | 'while' '(' expr ')' block
//!           | 'return' expr? ';' | 'break' ';' | 'continue' ';' | 'exit' ';'
//!           | 'assert' '(' expr ')' ';'
//!           | '// label(' int ',' string ',' criterion (',' 'head')? ')'
//! call     := ident '(' (expr (',' expr)*)? ')'
//! ```
//!
//! Label pragmas are ordinary `//` comments, so an annotated `.lwl` file is
//! still a valid plain program for any reader that ignores them.

use crate::annotate::{Criterion, Label};
use crate::error::{Error, Result};
use crate::lang::ast::*;
use crate::lang::lexer::{tokenize, Kw, Tok, Token};

/// A label pragma as written in the source.
#[derive(Debug, Clone)]
pub(crate) struct PragmaLabel {
    pub id: LabelId,
    pub predicate: Expr,
    pub criterion: Criterion,
    pub line: u32,
}

pub(crate) struct Parsed {
    pub program: Program,
    pub labels: Vec<PragmaLabel>,
}

pub(crate) fn parse_source(src: &str) -> Result<Parsed> {
    let tokens = tokenize(src)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        labels: Vec::new(),
    };
    let program = p.program()?;
    Ok(Parsed {
        program,
        labels: p.labels,
    })
}

/// Parses a standalone expression, as found in label pragmas and `labels.json`.
pub fn parse_expr(src: &str) -> Result<Expr> {
    let tokens = tokenize(src)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        labels: Vec::new(),
    };
    let e = p.expr()?;
    p.expect_eof()?;
    Ok(e)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    labels: Vec<PragmaLabel>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn here(&self) -> (u32, u32) {
        let t = &self.tokens[self.pos];
        (t.line, t.col)
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        let (line, col) = self.here();
        Err(Error::Syntax {
            line,
            col,
            msg: msg.into(),
        })
    }

    fn describe(tok: &Tok) -> String {
        match tok {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Int(v) => format!("integer `{v}`"),
            Tok::Kw(k) => format!("keyword `{}`", format!("{k:?}").to_lowercase()),
            Tok::Punct(p) => format!("`{p}`"),
            Tok::Pragma(_) => "label pragma".to_string(),
            Tok::Eof => "end of input".to_string(),
        }
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if matches!(self.peek(), Tok::Punct(q) if *q == p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> Result<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            self.err(format!("expected `{p}`, found {}", Self::describe(self.peek())))
        }
    }

    fn eat_kw(&mut self, kw: Kw) -> bool {
        if matches!(self.peek(), Tok::Kw(k) if *k == kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_ident(&mut self) -> Result<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => self.err(format!("expected identifier, found {}", Self::describe(&other))),
        }
    }

    fn expect_eof(&mut self) -> Result<()> {
        match self.peek() {
            Tok::Eof => Ok(()),
            other => self.err(format!("unexpected {}", Self::describe(other))),
        }
    }

    fn peek_type(&self) -> Option<Type> {
        match self.peek() {
            Tok::Kw(Kw::Int) => Some(Type::Int),
            Tok::Kw(Kw::Bool) => Some(Type::Bool),
            Tok::Kw(Kw::Void) => Some(Type::Void),
            _ => None,
        }
    }

    fn program(&mut self) -> Result<Program> {
        let mut globals = Vec::new();
        let mut functions = Vec::new();
        loop {
            match self.peek() {
                Tok::Eof => break,
                Tok::Pragma(_) => return self.err("label pragma outside a function body"),
                _ => {}
            }
            let (line, _) = self.here();
            let Some(ty) = self.peek_type() else {
                return self.err(format!(
                    "expected a declaration, found {}",
                    Self::describe(self.peek())
                ));
            };
            self.bump();
            let name = self.expect_ident()?;
            if matches!(self.peek(), Tok::Punct("(")) {
                functions.push(self.function(ty, name, line)?);
            } else {
                if !functions.is_empty() {
                    return self.err("global declarations must precede all functions");
                }
                if ty == Type::Void {
                    return self.err("globals cannot have type void");
                }
                let init = if self.eat_punct("=") {
                    Some(self.expr()?)
                } else {
                    None
                };
                self.expect_punct(";")?;
                globals.push(Global {
                    name,
                    ty,
                    init,
                    line,
                });
            }
        }
        if functions.is_empty() {
            return self.err("a program needs at least one function");
        }
        let mut program = Program {
            globals,
            functions,
            entry: "main".to_string(),
        };
        program.renumber();
        Ok(program)
    }

    fn function(&mut self, ret: Type, name: String, line: u32) -> Result<Function> {
        self.expect_punct("(")?;
        let mut params = Vec::new();
        if !self.eat_punct(")") {
            loop {
                let ty = match self.peek_type() {
                    Some(Type::Void) | None => return self.err("expected parameter type"),
                    Some(t) => t,
                };
                self.bump();
                let pname = self.expect_ident()?;
                params.push(Param { name: pname, ty });
                if self.eat_punct(")") {
                    break;
                }
                self.expect_punct(",")?;
            }
        }
        let body = self.block()?;
        Ok(Function {
            name,
            ret,
            params,
            body,
            loc: LocationId(0),
            line,
            writes: Default::default(),
            vars: Default::default(),
        })
    }

    fn block(&mut self) -> Result<Block> {
        self.expect_punct("{")?;
        let mut stmts = Vec::new();
        loop {
            if self.eat_punct("}") {
                break;
            }
            if matches!(self.peek(), Tok::Eof) {
                return self.err("unterminated block");
            }
            self.stmt_into(&mut stmts)?;
        }
        Ok(Block::new(stmts))
    }

    fn pragma(&mut self) -> Result<(PragmaLabel, bool)> {
        let token = self.bump();
        let Tok::Pragma(text) = token.tok else {
            unreachable!("pragma() called on a non-pragma token")
        };
        let bad = |msg: &str| Error::Syntax {
            line: token.line,
            col: token.col,
            msg: format!("malformed label pragma `{text}`: {msg}"),
        };
        let inner = text
            .strip_prefix("label")
            .map(str::trim_start)
            .and_then(|s| s.strip_prefix('('))
            .and_then(|s| s.trim_end().strip_suffix(')'))
            .ok_or_else(|| bad("expected label(id, \"predicate\", criterion)"))?;
        let (id_part, rest) = inner.split_once(',').ok_or_else(|| bad("missing fields"))?;
        let id: u32 = id_part
            .trim()
            .parse()
            .map_err(|_| bad("id must be a positive integer"))?;
        if id == 0 {
            return Err(bad("id must be positive"));
        }
        let rest = rest.trim_start();
        let rest = rest
            .strip_prefix('"')
            .ok_or_else(|| bad("predicate must be a quoted string"))?;
        let close = rest.find('"').ok_or_else(|| bad("unterminated predicate"))?;
        let pred_src = &rest[..close];
        let tail: Vec<&str> = rest[close + 1..]
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect();
        let (crit, head) = match tail.as_slice() {
            [c] => (*c, false),
            [c, "head"] => (*c, true),
            _ => return Err(bad("expected criterion and optional `head`")),
        };
        let criterion: Criterion = crit.parse().map_err(|e: String| bad(&e))?;
        let predicate = parse_expr(pred_src).map_err(|e| bad(&e.to_string()))?;
        Ok((
            PragmaLabel {
                id: LabelId(id),
                predicate,
                criterion,
                line: token.line,
            },
            head,
        ))
    }

    fn stmt_into(&mut self, out: &mut Vec<Stmt>) -> Result<()> {
        if matches!(self.peek(), Tok::Pragma(_)) {
            let (line, _) = self.here();
            let (label, head) = self.pragma()?;
            let id = label.id;
            self.labels.push(label);
            let stmt = Stmt {
                loc: LocationId(0),
                line,
                kind: StmtKind::Label(id),
            };
            if head {
                let mut heads = vec![stmt];
                while matches!(self.peek(), Tok::Pragma(_)) {
                    let (line, _) = self.here();
                    let (label, is_head) = self.pragma()?;
                    if !is_head {
                        return self.err("plain label pragma between loop-head pragmas");
                    }
                    heads.push(Stmt {
                        loc: LocationId(0),
                        line,
                        kind: StmtKind::Label(label.id),
                    });
                    self.labels.push(label);
                }
                if !matches!(self.peek(), Tok::Kw(Kw::While)) {
                    return self.err("loop-head label pragma must precede a `while`");
                }
                let mut w = self.stmt()?;
                if let StmtKind::While { head, .. } = &mut w.kind {
                    *head = heads;
                }
                out.push(w);
            } else {
                out.push(stmt);
            }
            return Ok(());
        }
        let s = self.stmt()?;
        out.push(s);
        Ok(())
    }

    fn stmt(&mut self) -> Result<Stmt> {
        let (line, _) = self.here();
        let kind = match self.peek().clone() {
            Tok::Kw(Kw::Int) | Tok::Kw(Kw::Bool) => {
                let ty = self.peek_type().unwrap();
                self.bump();
                let name = self.expect_ident()?;
                if self.eat_punct("=") {
                    if self.is_call_ahead() {
                        let (callee, args) = self.call()?;
                        self.expect_punct(";")?;
                        StmtKind::Call {
                            callee,
                            args,
                            target: Some(CallTarget {
                                name,
                                declare: Some(ty),
                            }),
                        }
                    } else {
                        let init = self.expr()?;
                        self.expect_punct(";")?;
                        StmtKind::Decl {
                            name,
                            ty,
                            init: Some(init),
                        }
                    }
                } else {
                    self.expect_punct(";")?;
                    StmtKind::Decl {
                        name,
                        ty,
                        init: None,
                    }
                }
            }
            Tok::Kw(Kw::Void) => return self.err("`void` is not a variable type"),
            Tok::Ident(name) => {
                if self.is_call_ahead() {
                    let (callee, args) = self.call()?;
                    self.expect_punct(";")?;
                    StmtKind::Call {
                        callee,
                        args,
                        target: None,
                    }
                } else {
                    self.bump();
                    self.expect_punct("=")?;
                    if self.is_call_ahead() {
                        let (callee, args) = self.call()?;
                        self.expect_punct(";")?;
                        StmtKind::Call {
                            callee,
                            args,
                            target: Some(CallTarget {
                                name,
                                declare: None,
                            }),
                        }
                    } else {
                        let value = self.expr()?;
                        self.expect_punct(";")?;
                        StmtKind::Assign { name, value }
                    }
                }
            }
            Tok::Kw(Kw::If) => return self.if_stmt(),
            Tok::Kw(Kw::While) => {
                self.bump();
                self.expect_punct("(")?;
                let cond = self.expr()?;
                self.expect_punct(")")?;
                let body = self.block()?;
                StmtKind::While {
                    cond,
                    head: Vec::new(),
                    body,
                }
            }
            Tok::Kw(Kw::Return) => {
                self.bump();
                let value = if self.eat_punct(";") {
                    None
                } else {
                    let e = self.expr()?;
                    self.expect_punct(";")?;
                    Some(e)
                };
                StmtKind::Return(value)
            }
            Tok::Kw(Kw::Break) => {
                self.bump();
                self.expect_punct(";")?;
                StmtKind::Break
            }
            Tok::Kw(Kw::Continue) => {
                self.bump();
                self.expect_punct(";")?;
                StmtKind::Continue
            }
            Tok::Kw(Kw::Exit) => {
                self.bump();
                // `exit(0);` is accepted for C familiarity; the status is ignored.
                if self.eat_punct("(") {
                    if !self.eat_punct(")") {
                        self.expr()?;
                        self.expect_punct(")")?;
                    }
                }
                self.expect_punct(";")?;
                StmtKind::Exit
            }
            Tok::Kw(Kw::Assert) => {
                self.bump();
                self.expect_punct("(")?;
                let e = self.expr()?;
                self.expect_punct(")")?;
                self.expect_punct(";")?;
                StmtKind::Assert(e)
            }
            other => return self.err(format!("expected a statement, found {}", Self::describe(&other))),
        };
        Ok(Stmt {
            loc: LocationId(0),
            line,
            kind,
        })
    }

    fn if_stmt(&mut self) -> Result<Stmt> {
        let (line, _) = self.here();
        self.bump();
        self.expect_punct("(")?;
        let cond = self.expr()?;
        self.expect_punct(")")?;
        let then_block = self.block()?;
        let else_block = if self.eat_kw(Kw::Else) {
            if matches!(self.peek(), Tok::Kw(Kw::If)) {
                Block::new(vec![self.if_stmt()?])
            } else {
                self.block()?
            }
        } else {
            Block::default()
        };
        Ok(Stmt {
            loc: LocationId(0),
            line,
            kind: StmtKind::If {
                cond,
                then_block,
                else_block,
            },
        })
    }

    fn is_call_ahead(&self) -> bool {
        matches!(self.peek(), Tok::Ident(_)) && matches!(self.peek_at(1), Tok::Punct("("))
    }

    fn call(&mut self) -> Result<(String, Vec<Expr>)> {
        let name = self.expect_ident()?;
        self.expect_punct("(")?;
        let mut args = Vec::new();
        if !self.eat_punct(")") {
            loop {
                args.push(self.expr()?);
                if self.eat_punct(")") {
                    break;
                }
                self.expect_punct(",")?;
            }
        }
        Ok((name, args))
    }

    pub(crate) fn expr(&mut self) -> Result<Expr> {
        self.binary(1)
    }

    fn binop_here(&self) -> Option<BinOp> {
        let Tok::Punct(p) = self.peek() else {
            return None;
        };
        Some(match *p {
            "+" => BinOp::Add,
            "-" => BinOp::Sub,
            "*" => BinOp::Mul,
            "/" => BinOp::Div,
            "<" => BinOp::Lt,
            "<=" => BinOp::Le,
            ">" => BinOp::Gt,
            ">=" => BinOp::Ge,
            "==" => BinOp::Eq,
            "!=" => BinOp::Ne,
            "&&" => BinOp::And,
            "||" => BinOp::Or,
            _ => return None,
        })
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binop_here() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.bump();
            let rhs = self.binary(prec + 1)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat_punct("-") {
            // Fold `-literal` so negative constants print and compare naturally.
            if let Tok::Int(v) = *self.peek() {
                self.bump();
                return Ok(Expr::Int(-v));
            }
            return Ok(Expr::unary(UnOp::Neg, self.unary()?));
        }
        if self.eat_punct("!") {
            return Ok(Expr::not(self.unary()?));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Expr::Int(v))
            }
            Tok::Kw(Kw::True) => {
                self.bump();
                Ok(Expr::Bool(true))
            }
            Tok::Kw(Kw::False) => {
                self.bump();
                Ok(Expr::Bool(false))
            }
            Tok::Kw(Kw::Abs) => {
                self.bump();
                self.expect_punct("(")?;
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(Expr::unary(UnOp::Abs, e))
            }
            Tok::Ident(name) => {
                if matches!(self.peek_at(1), Tok::Punct("(")) {
                    return self.err(format!(
                        "call to `{name}` inside an expression; calls must be statements"
                    ));
                }
                self.bump();
                Ok(Expr::Var(name))
            }
            Tok::Punct("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            other => self.err(format!("expected an expression, found {}", Self::describe(&other))),
        }
    }
}

/// Builds a `Label` from a parsed pragma once locations are known.
pub(crate) fn pragma_to_label(p: &PragmaLabel, location: LocationId) -> Label {
    Label {
        id: p.id,
        location,
        predicate: p.predicate.clone(),
        criterion: p.criterion,
        origin: format!("pragma at line {}", p.line),
    }
}
