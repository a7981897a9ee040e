use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Identifier of a control location (a function entry or a statement).
///
/// Locations are numbered in source order; renumbering after label insertion
/// keeps that property.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct LocationId(pub u32);

impl fmt::Display for LocationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "@{}", self.0)
    }
}

/// Program-wide unique label identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelId(pub u32);

impl fmt::Display for LabelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "l{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Type {
    Int,
    Bool,
    Void,
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Type::Int => "int",
            Type::Bool => "bool",
            Type::Void => "void",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// Binding strength; higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne => 3,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div => 6,
        }
    }

    pub fn is_arith(self) -> bool {
        matches!(self, BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div)
    }

    pub fn is_relational(self) -> bool {
        matches!(
            self,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne
        )
    }

    pub fn is_logical(self) -> bool {
        matches!(self, BinOp::And | BinOp::Or)
    }

    /// The relation holding exactly when `self` does not.
    pub fn negated_relation(self) -> Option<BinOp> {
        Some(match self {
            BinOp::Lt => BinOp::Ge,
            BinOp::Le => BinOp::Gt,
            BinOp::Gt => BinOp::Le,
            BinOp::Ge => BinOp::Lt,
            BinOp::Eq => BinOp::Ne,
            BinOp::Ne => BinOp::Eq,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Int(i64),
    Bool(bool),
    Var(String),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn unary(op: UnOp, e: Expr) -> Expr {
        Expr::Unary(op, Box::new(e))
    }

    pub fn binary(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    pub fn not(e: Expr) -> Expr {
        Expr::unary(UnOp::Not, e)
    }

    pub fn and(l: Expr, r: Expr) -> Expr {
        Expr::binary(BinOp::And, l, r)
    }

    pub fn or(l: Expr, r: Expr) -> Expr {
        Expr::binary(BinOp::Or, l, r)
    }

    pub fn ne(l: Expr, r: Expr) -> Expr {
        Expr::binary(BinOp::Ne, l, r)
    }

    /// Conjunction of a list; `true` when empty.
    pub fn conj(parts: impl IntoIterator<Item = Expr>) -> Expr {
        let mut it = parts.into_iter();
        match it.next() {
            None => Expr::Bool(true),
            Some(first) => it.fold(first, Expr::and),
        }
    }

    /// Calls `f` on every sub-expression in pre-order.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Unary(_, e) => e.walk(f),
            Expr::Binary(_, l, r) => {
                l.walk(f);
                r.walk(f);
            }
            _ => {}
        }
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.walk(&mut |e| {
            if let Expr::Var(v) = e {
                out.insert(v.clone());
            }
        });
        out
    }

    pub fn has_division(&self) -> bool {
        let mut found = false;
        self.walk(&mut |e| {
            if let Expr::Binary(BinOp::Div, _, _) = e {
                found = true;
            }
        });
        found
    }

    /// Divisors that are not nonzero integer literals, in pre-order, without duplicates.
    pub fn risky_divisors(&self) -> Vec<&Expr> {
        let mut out: Vec<&Expr> = Vec::new();
        self.walk(&mut |e| {
            if let Expr::Binary(BinOp::Div, _, d) = e {
                let safe = matches!(crate::lang::simplify::const_int(d), Some(v) if v != 0);
                if !safe && !out.contains(&&**d) {
                    out.push(d);
                }
            }
        });
        out
    }
}

/// Left-hand side of a call statement: `x = f(..);` or `int x = f(..);`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallTarget {
    pub name: String,
    pub declare: Option<Type>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StmtKind {
    Decl {
        name: String,
        ty: Type,
        init: Option<Expr>,
    },
    Assign {
        name: String,
        value: Expr,
    },
    If {
        cond: Expr,
        then_block: Block,
        else_block: Block,
    },
    /// `head` holds the loop-head labels, evaluated before every condition test.
    While {
        cond: Expr,
        head: Vec<Stmt>,
        body: Block,
    },
    Call {
        callee: String,
        args: Vec<Expr>,
        target: Option<CallTarget>,
    },
    Return(Option<Expr>),
    Break,
    Continue,
    Exit,
    Label(LabelId),
    Assert(Expr),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stmt {
    pub loc: LocationId,
    pub line: u32,
    pub kind: StmtKind,
}

impl Stmt {
    pub fn new(kind: StmtKind) -> Stmt {
        Stmt {
            loc: LocationId(0),
            line: 0,
            kind,
        }
    }

    pub fn label_id(&self) -> Option<LabelId> {
        match self.kind {
            StmtKind::Label(id) => Some(id),
            _ => None,
        }
    }

    /// Expressions evaluated by this statement itself (not by nested blocks).
    pub fn own_exprs(&self) -> Vec<&Expr> {
        match &self.kind {
            StmtKind::Decl { init: Some(e), .. } => vec![e],
            StmtKind::Assign { value, .. } => vec![value],
            StmtKind::If { cond, .. } | StmtKind::While { cond, .. } => vec![cond],
            StmtKind::Call { args, .. } => args.iter().collect(),
            StmtKind::Return(Some(e)) | StmtKind::Assert(e) => vec![e],
            _ => Vec::new(),
        }
    }

    /// Calls `f` on this statement and every nested statement, in source order.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Stmt)) {
        if let StmtKind::While { head, .. } = &self.kind {
            for h in head {
                f(h);
            }
        }
        f(self);
        match &self.kind {
            StmtKind::If {
                then_block,
                else_block,
                ..
            } => {
                then_block.walk(f);
                else_block.walk(f);
            }
            StmtKind::While { body, .. } => body.walk(f),
            _ => {}
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Block {
    pub stmts: Vec<Stmt>,
}

impl Block {
    pub fn new(stmts: Vec<Stmt>) -> Block {
        Block { stmts }
    }

    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Stmt)) {
        for s in &self.stmts {
            s.walk(f);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: Type,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    pub ret: Type,
    pub params: Vec<Param>,
    pub body: Block,
    pub loc: LocationId,
    pub line: u32,
    /// Globals assigned by this function or anything it calls. Filled by the type checker.
    pub writes: BTreeSet<String>,
    /// Types of every parameter and local of the function. Filled by the type checker.
    pub vars: BTreeMap<String, Type>,
}

impl Function {
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Stmt)) {
        self.body.walk(f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Global {
    pub name: String,
    pub ty: Type,
    pub init: Option<Expr>,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub globals: Vec<Global>,
    pub functions: Vec<Function>,
    pub entry: String,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn entry_function(&self) -> &Function {
        self.function(&self.entry)
            .expect("type-checked program has an entry function")
    }

    pub fn global(&self, name: &str) -> Option<&Global> {
        self.globals.iter().find(|g| g.name == name)
    }

    /// Type of `name` as seen from inside `func`.
    pub fn var_type(&self, func: &Function, name: &str) -> Option<Type> {
        func.vars
            .get(name)
            .copied()
            .or_else(|| self.global(name).map(|g| g.ty))
    }

    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Function, &'a Stmt)) {
        for func in &self.functions {
            func.walk(&mut |s| f(func, s));
        }
    }

    /// Number of distinct locations (function entries plus statements).
    pub fn location_count(&self) -> usize {
        let mut n = self.functions.len();
        self.walk(&mut |_, _| n += 1);
        n
    }

    /// Function containing the statement at `loc`.
    pub fn function_of(&self, loc: LocationId) -> Option<&Function> {
        let mut found = None;
        self.walk(&mut |f, s| {
            if s.loc == loc {
                found = Some(f);
            }
        });
        found
    }

    /// Reassigns location ids in source order: each function entry, then its statements.
    pub fn renumber(&mut self) {
        let mut next = 1u32;
        for func in &mut self.functions {
            func.loc = LocationId(next);
            next += 1;
            renumber_block(&mut func.body, &mut next);
        }
    }
}

fn renumber_block(block: &mut Block, next: &mut u32) {
    for stmt in &mut block.stmts {
        if let StmtKind::While { head, .. } = &mut stmt.kind {
            for h in head {
                h.loc = LocationId(*next);
                *next += 1;
            }
        }
        stmt.loc = LocationId(*next);
        *next += 1;
        match &mut stmt.kind {
            StmtKind::If {
                then_block,
                else_block,
                ..
            } => {
                renumber_block(then_block, next);
                renumber_block(else_block, next);
            }
            StmtKind::While { body, .. } => renumber_block(body, next),
            _ => {}
        }
    }
}
