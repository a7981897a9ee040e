//! Pretty-printer. Output re-parses to the same program (labels as pragmas).

use std::collections::HashMap;
use std::fmt::Write;

use crate::annotate::Label;
use crate::lang::ast::*;

pub fn expr_to_string(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, 0);
    s
}

fn write_expr(out: &mut String, e: &Expr, min_prec: u8) {
    match e {
        Expr::Int(v) => {
            if *v < 0 && min_prec > 0 {
                let _ = write!(out, "({v})");
            } else {
                let _ = write!(out, "{v}");
            }
        }
        Expr::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Expr::Var(v) => out.push_str(v),
        Expr::Unary(UnOp::Abs, x) => {
            out.push_str("abs(");
            write_expr(out, x, 0);
            out.push(')');
        }
        Expr::Unary(op, x) => {
            out.push(if *op == UnOp::Neg { '-' } else { '!' });
            // Unary binds tighter than any binary operator.
            write_expr(out, x, 7);
        }
        Expr::Binary(op, l, r) => {
            let prec = op.precedence();
            let paren = prec < min_prec;
            if paren {
                out.push('(');
            }
            write_expr(out, l, prec);
            let _ = write!(out, " {} ", op.symbol());
            // Left-associative: the right operand needs strictly higher precedence.
            write_expr(out, r, prec + 1);
            if paren {
                out.push(')');
            }
        }
    }
}

/// Renders a program; `labels` supplies pragma text for label statements.
pub fn program_to_string(p: &Program, labels: &[Label]) -> String {
    let by_id: HashMap<LabelId, &Label> = labels.iter().map(|l| (l.id, l)).collect();
    let mut pr = Printer {
        out: String::new(),
        labels: by_id,
    };
    for g in &p.globals {
        let _ = write!(pr.out, "{} {}", g.ty, g.name);
        if let Some(init) = &g.init {
            let _ = write!(pr.out, " = {}", expr_to_string(init));
        }
        pr.out.push_str(";\n");
    }
    if !p.globals.is_empty() {
        pr.out.push('\n');
    }
    for (i, f) in p.functions.iter().enumerate() {
        if i > 0 {
            pr.out.push('\n');
        }
        let params: Vec<String> = f
            .params
            .iter()
            .map(|p| format!("{} {}", p.ty, p.name))
            .collect();
        let _ = writeln!(pr.out, "{} {}({}) {{", f.ret, f.name, params.join(", "));
        pr.block(&f.body, 1);
        pr.out.push_str("}\n");
    }
    pr.out
}

struct Printer<'a> {
    out: String,
    labels: HashMap<LabelId, &'a Label>,
}

impl Printer<'_> {
    fn indent(&mut self, depth: usize) {
        for _ in 0..depth {
            self.out.push_str("  ");
        }
    }

    fn pragma(&mut self, id: LabelId, depth: usize, head: bool) {
        self.indent(depth);
        match self.labels.get(&id) {
            Some(l) => {
                let _ = write!(
                    self.out,
                    "// label({}, \"{}\", {}",
                    id.0,
                    expr_to_string(&l.predicate),
                    l.criterion
                );
            }
            None => {
                let _ = write!(self.out, "// label({}, \"true\", dc", id.0);
            }
        }
        self.out.push_str(if head { ", head)\n" } else { ")\n" });
    }

    fn block(&mut self, b: &Block, depth: usize) {
        for s in &b.stmts {
            self.stmt(s, depth);
        }
    }

    fn stmt(&mut self, s: &Stmt, depth: usize) {
        match &s.kind {
            StmtKind::Label(id) => {
                self.pragma(*id, depth, false);
                return;
            }
            StmtKind::While { head, .. } => {
                for h in head {
                    if let StmtKind::Label(id) = h.kind {
                        self.pragma(id, depth, true);
                    }
                }
            }
            _ => {}
        }
        self.indent(depth);
        match &s.kind {
            StmtKind::Decl { name, ty, init } => {
                let _ = write!(self.out, "{ty} {name}");
                if let Some(e) = init {
                    let _ = write!(self.out, " = {}", expr_to_string(e));
                }
                self.out.push_str(";\n");
            }
            StmtKind::Assign { name, value } => {
                let _ = writeln!(self.out, "{name} = {};", expr_to_string(value));
            }
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                let _ = writeln!(self.out, "if ({}) {{", expr_to_string(cond));
                self.block(then_block, depth + 1);
                self.indent(depth);
                if else_block.stmts.is_empty() {
                    self.out.push_str("}\n");
                } else {
                    self.out.push_str("} else {\n");
                    self.block(else_block, depth + 1);
                    self.indent(depth);
                    self.out.push_str("}\n");
                }
            }
            StmtKind::While { cond, body, .. } => {
                let _ = writeln!(self.out, "while ({}) {{", expr_to_string(cond));
                self.block(body, depth + 1);
                self.indent(depth);
                self.out.push_str("}\n");
            }
            StmtKind::Call {
                callee,
                args,
                target,
            } => {
                if let Some(t) = target {
                    if let Some(ty) = t.declare {
                        let _ = write!(self.out, "{ty} ");
                    }
                    let _ = write!(self.out, "{} = ", t.name);
                }
                let args: Vec<String> = args.iter().map(expr_to_string).collect();
                let _ = writeln!(self.out, "{callee}({});", args.join(", "));
            }
            StmtKind::Return(None) => self.out.push_str("return;\n"),
            StmtKind::Return(Some(e)) => {
                let _ = writeln!(self.out, "return {};", expr_to_string(e));
            }
            StmtKind::Break => self.out.push_str("break;\n"),
            StmtKind::Continue => self.out.push_str("continue;\n"),
            StmtKind::Exit => self.out.push_str("exit;\n"),
            StmtKind::Assert(e) => {
                let _ = writeln!(self.out, "assert({});", expr_to_string(e));
            }
            StmtKind::Label(_) => unreachable!("handled above"),
        }
    }
}
