//! Name resolution and type checking. Also fills `Function::vars` and
//! `Function::writes`.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::lang::ast::*;

/// Variables visible at one program point.
#[derive(Debug, Clone, Default)]
pub struct Scope {
    frames: Vec<Vec<(String, Type)>>,
}

impl Scope {
    fn push(&mut self) {
        self.frames.push(Vec::new());
    }

    fn pop(&mut self) {
        self.frames.pop();
    }

    fn declare(&mut self, name: &str, ty: Type) {
        self.frames
            .last_mut()
            .expect("scope has a frame")
            .push((name.to_string(), ty));
    }

    pub fn lookup(&self, name: &str) -> Option<Type> {
        self.frames
            .iter()
            .rev()
            .flat_map(|f| f.iter().rev())
            .find(|(n, _)| n == name)
            .map(|(_, t)| *t)
    }

    pub fn names(&self) -> impl Iterator<Item = (&str, Type)> {
        self.frames
            .iter()
            .flat_map(|f| f.iter())
            .map(|(n, t)| (n.as_str(), *t))
    }
}

/// Infers the type of `e` in `scope`.
pub fn type_of(e: &Expr, scope: &dyn Fn(&str) -> Option<Type>) -> std::result::Result<Type, String> {
    Ok(match e {
        Expr::Int(_) => Type::Int,
        Expr::Bool(_) => Type::Bool,
        Expr::Var(v) => scope(v).ok_or_else(|| format!("undeclared variable {v}"))?,
        Expr::Unary(op, inner) => {
            let t = type_of(inner, scope)?;
            let want = match op {
                UnOp::Not => Type::Bool,
                UnOp::Neg | UnOp::Abs => Type::Int,
            };
            if t != want {
                return Err(format!("operand of {op:?} must be {want}, found {t}"));
            }
            want
        }
        Expr::Binary(op, l, r) => {
            let (lt, rt) = (type_of(l, scope)?, type_of(r, scope)?);
            match op {
                _ if op.is_arith() => {
                    if lt != Type::Int || rt != Type::Int {
                        return Err(format!("`{}` needs int operands", op.symbol()));
                    }
                    Type::Int
                }
                BinOp::Eq | BinOp::Ne => {
                    if lt != rt {
                        return Err(format!("`{}` compares {lt} with {rt}", op.symbol()));
                    }
                    Type::Bool
                }
                _ if op.is_relational() => {
                    if lt != Type::Int || rt != Type::Int {
                        return Err(format!("`{}` needs int operands", op.symbol()));
                    }
                    Type::Bool
                }
                _ => {
                    if lt != Type::Bool || rt != Type::Bool {
                        return Err(format!("`{}` needs bool operands", op.symbol()));
                    }
                    Type::Bool
                }
            }
        }
    })
}

struct Checker<'a> {
    globals: HashMap<String, Type>,
    sigs: HashMap<String, (Type, Vec<Type>)>,
    label_preds: &'a HashMap<LabelId, Expr>,
    seen_labels: BTreeSet<LabelId>,
}

/// Checks `program` and fills the computed fields. `label_preds` supplies the
/// predicates of label statements so they are checked in their own scope.
pub fn check(program: &mut Program, label_preds: &HashMap<LabelId, Expr>) -> Result<()> {
    let mut globals = HashMap::new();
    for g in &program.globals {
        if globals.insert(g.name.clone(), g.ty).is_some() {
            return Err(Error::Type {
                line: g.line,
                msg: format!("global {} declared twice", g.name),
            });
        }
        if let Some(init) = &g.init {
            let t = type_of(init, &|_| None).map_err(|msg| Error::Type {
                line: g.line,
                msg: format!("global initializer must be constant: {msg}"),
            })?;
            if t != g.ty {
                return Err(Error::Type {
                    line: g.line,
                    msg: format!("global {} is {} but initialized with {t}", g.name, g.ty),
                });
            }
        }
    }
    let mut sigs = HashMap::new();
    for f in &program.functions {
        if globals.contains_key(&f.name) {
            return Err(Error::Type {
                line: f.line,
                msg: format!("function {} clashes with a global", f.name),
            });
        }
        let sig = (f.ret, f.params.iter().map(|p| p.ty).collect());
        if sigs.insert(f.name.clone(), sig).is_some() {
            return Err(Error::Type {
                line: f.line,
                msg: format!("function {} defined twice", f.name),
            });
        }
    }
    if program.function(&program.entry).is_none() {
        return Err(Error::Type {
            line: 1,
            msg: format!("no entry function `{}`", program.entry),
        });
    }

    let mut checker = Checker {
        globals,
        sigs,
        label_preds,
        seen_labels: BTreeSet::new(),
    };
    for f in &mut program.functions {
        checker.function(f)?;
    }
    if let Some(missing) = label_preds.keys().find(|id| !checker.seen_labels.contains(id)) {
        return Err(Error::Label(format!("label {missing} has no statement in the program")));
    }
    compute_writes(program);
    Ok(())
}

impl Checker<'_> {
    fn function(&mut self, f: &mut Function) -> Result<()> {
        let mut vars = BTreeMap::new();
        let mut scope = Scope::default();
        scope.push();
        for p in &f.params {
            if self.globals.contains_key(&p.name) || vars.insert(p.name.clone(), p.ty).is_some() {
                return Err(Error::Type {
                    line: f.line,
                    msg: format!("parameter {} shadows another name", p.name),
                });
            }
            scope.declare(&p.name, p.ty);
        }
        let ctx = FnCtx {
            ret: f.ret,
            name: f.name.clone(),
        };
        self.block(&f.body, &ctx, &mut scope, &mut vars, 0)?;
        f.vars = vars;
        Ok(())
    }

    fn expr_type(&self, e: &Expr, scope: &Scope, line: u32) -> Result<Type> {
        let lookup = |n: &str| scope.lookup(n).or_else(|| self.globals.get(n).copied());
        type_of(e, &lookup).map_err(|msg| Error::Type { line, msg })
    }

    fn expect(&self, e: &Expr, want: Type, scope: &Scope, line: u32, what: &str) -> Result<()> {
        let t = self.expr_type(e, scope, line)?;
        if t != want {
            return Err(Error::Type {
                line,
                msg: format!("{what} must be {want}, found {t}"),
            });
        }
        Ok(())
    }

    fn var_type(&self, name: &str, scope: &Scope, line: u32) -> Result<Type> {
        scope
            .lookup(name)
            .or_else(|| self.globals.get(name).copied())
            .ok_or_else(|| Error::Type {
                line,
                msg: format!("undeclared variable {name}"),
            })
    }

    fn declare(
        &self,
        name: &str,
        ty: Type,
        scope: &mut Scope,
        vars: &mut BTreeMap<String, Type>,
        line: u32,
    ) -> Result<()> {
        if ty == Type::Void {
            return Err(Error::Type {
                line,
                msg: format!("variable {name} cannot be void"),
            });
        }
        if self.globals.contains_key(name) || vars.insert(name.to_string(), ty).is_some() {
            return Err(Error::Type {
                line,
                msg: format!("{name} is already declared in this function"),
            });
        }
        scope.declare(name, ty);
        Ok(())
    }

    fn block(
        &mut self,
        b: &Block,
        ctx: &FnCtx,
        scope: &mut Scope,
        vars: &mut BTreeMap<String, Type>,
        loops: u32,
    ) -> Result<()> {
        scope.push();
        for s in &b.stmts {
            self.stmt(s, ctx, scope, vars, loops)?;
        }
        scope.pop();
        Ok(())
    }

    fn label(&mut self, id: LabelId, scope: &Scope, line: u32) -> Result<()> {
        if !self.seen_labels.insert(id) {
            return Err(Error::Label(format!("label id {} used twice", id.0)));
        }
        let pred = self
            .label_preds
            .get(&id)
            .ok_or_else(|| Error::Label(format!("label {id} has no predicate")))?;
        self.expect(pred, Type::Bool, scope, line, "label predicate")
    }

    fn stmt(
        &mut self,
        s: &Stmt,
        ctx: &FnCtx,
        scope: &mut Scope,
        vars: &mut BTreeMap<String, Type>,
        loops: u32,
    ) -> Result<()> {
        let line = s.line;
        match &s.kind {
            StmtKind::Decl { name, ty, init } => {
                if let Some(e) = init {
                    self.expect(e, *ty, scope, line, "initializer")?;
                }
                self.declare(name, *ty, scope, vars, line)?;
            }
            StmtKind::Assign { name, value } => {
                let t = self.var_type(name, scope, line)?;
                self.expect(value, t, scope, line, "assigned value")?;
            }
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                self.expect(cond, Type::Bool, scope, line, "condition")?;
                self.block(then_block, ctx, scope, vars, loops)?;
                self.block(else_block, ctx, scope, vars, loops)?;
            }
            StmtKind::While { cond, head, body } => {
                for h in head {
                    let StmtKind::Label(id) = h.kind else {
                        return Err(Error::Type {
                            line: h.line,
                            msg: "only labels may sit at a loop head".into(),
                        });
                    };
                    self.label(id, scope, h.line)?;
                }
                self.expect(cond, Type::Bool, scope, line, "loop condition")?;
                self.block(body, ctx, scope, vars, loops + 1)?;
            }
            StmtKind::Call {
                callee,
                args,
                target,
            } => {
                let (ret, params) = self.sigs.get(callee).cloned().ok_or_else(|| Error::Type {
                    line,
                    msg: format!("call to undefined function {callee}"),
                })?;
                if params.len() != args.len() {
                    return Err(Error::Type {
                        line,
                        msg: format!(
                            "{callee} expects {} arguments, got {}",
                            params.len(),
                            args.len()
                        ),
                    });
                }
                for (a, t) in args.iter().zip(params) {
                    self.expect(a, t, scope, line, "argument")?;
                }
                if let Some(t) = target {
                    if ret == Type::Void {
                        return Err(Error::Type {
                            line,
                            msg: format!("{callee} returns nothing"),
                        });
                    }
                    match t.declare {
                        Some(dt) => {
                            if dt != ret {
                                return Err(Error::Type {
                                    line,
                                    msg: format!("{callee} returns {ret}, not {dt}"),
                                });
                            }
                            self.declare(&t.name, dt, scope, vars, line)?;
                        }
                        None => {
                            let vt = self.var_type(&t.name, scope, line)?;
                            if vt != ret {
                                return Err(Error::Type {
                                    line,
                                    msg: format!("{callee} returns {ret}, {} is {vt}", t.name),
                                });
                            }
                        }
                    }
                }
            }
            StmtKind::Return(value) => match (value, ctx.ret) {
                (None, Type::Void) => {}
                (Some(e), t) if t != Type::Void => {
                    self.expect(e, t, scope, line, "return value")?;
                }
                (None, t) => {
                    return Err(Error::Type {
                        line,
                        msg: format!("{} must return a {t}", ctx.name),
                    })
                }
                (Some(_), _) => {
                    return Err(Error::Type {
                        line,
                        msg: format!("{} returns void", ctx.name),
                    })
                }
            },
            StmtKind::Break | StmtKind::Continue => {
                if loops == 0 {
                    return Err(Error::Type {
                        line,
                        msg: "break/continue outside a loop".into(),
                    });
                }
            }
            StmtKind::Exit => {}
            StmtKind::Label(id) => self.label(*id, scope, line)?,
            StmtKind::Assert(e) => self.expect(e, Type::Bool, scope, line, "assertion")?,
        }
        Ok(())
    }
}

struct FnCtx {
    ret: Type,
    name: String,
}

/// Direct callees of a function, in first-call order.
pub fn callees(f: &Function) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    f.walk(&mut |s| {
        if let StmtKind::Call { callee, .. } = &s.kind {
            if !out.contains(callee) {
                out.push(callee.clone());
            }
        }
    });
    out
}

fn compute_writes(program: &mut Program) {
    let globals: BTreeSet<&str> = program.globals.iter().map(|g| g.name.as_str()).collect();
    let mut writes: HashMap<String, BTreeSet<String>> = HashMap::new();
    for f in &program.functions {
        let mut w = BTreeSet::new();
        f.walk(&mut |s| {
            let target = match &s.kind {
                StmtKind::Assign { name, .. } => Some(name),
                StmtKind::Call {
                    target: Some(t), ..
                } if t.declare.is_none() => Some(&t.name),
                _ => None,
            };
            if let Some(name) = target {
                // Locals never share a name with a global, so membership decides.
                if globals.contains(name.as_str()) && !f.vars.contains_key(name) {
                    w.insert(name.clone());
                }
            }
        });
        writes.insert(f.name.clone(), w);
    }
    let calls: HashMap<String, Vec<String>> = program
        .functions
        .iter()
        .map(|f| (f.name.clone(), callees(f)))
        .collect();
    loop {
        let mut changed = false;
        for (f, cs) in &calls {
            let mut acc = writes[f].clone();
            for c in cs {
                acc.extend(writes[c].iter().cloned());
            }
            if acc.len() != writes[f].len() {
                writes.insert(f.clone(), acc);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    for f in &mut program.functions {
        f.writes = writes.remove(&f.name).unwrap_or_default();
    }
}
