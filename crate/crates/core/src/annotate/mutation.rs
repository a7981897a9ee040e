//! Weak mutation labels: `guard && s != s'` for each subterm `s` and mutant `s'`.

use crate::lang::ast::*;
use crate::lang::printer::expr_to_string;
use crate::lang::simplify::fold_constants;
use crate::lang::typeck::type_of;

const ARITH: [BinOp; 4] = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div];
const REL: [BinOp; 6] = [
    BinOp::Lt,
    BinOp::Le,
    BinOp::Gt,
    BinOp::Ge,
    BinOp::Eq,
    BinOp::Ne,
];

fn operator_mutants(s: &Expr, ty: Type) -> Vec<(&'static str, Expr)> {
    let mut out = Vec::new();
    match s {
        Expr::Binary(op, l, r) if op.is_arith() => {
            for alt in ARITH.into_iter().filter(|a| a != op) {
                out.push(("AOR", Expr::binary(alt, (**l).clone(), (**r).clone())));
            }
        }
        Expr::Binary(op, l, r) if op.is_relational() => {
            for alt in REL.into_iter().filter(|a| a != op) {
                out.push(("ROR", Expr::binary(alt, (**l).clone(), (**r).clone())));
            }
        }
        Expr::Binary(op @ (BinOp::And | BinOp::Or), l, r) => {
            let alt = if *op == BinOp::And { BinOp::Or } else { BinOp::And };
            out.push(("LCR", Expr::binary(alt, (**l).clone(), (**r).clone())));
        }
        _ => {}
    }
    match (ty, s) {
        (Type::Int, Expr::Var(_) | Expr::Int(_)) => {
            out.push(("ABS", Expr::unary(UnOp::Abs, s.clone())));
        }
        (Type::Bool, Expr::Bool(_)) => {}
        (Type::Bool, _) => out.push(("UOI", Expr::not(s.clone()))),
        _ => {}
    }
    out
}

fn guard_terms(e: &Expr, out: &mut Vec<Expr>) {
    for d in e.risky_divisors() {
        let g = Expr::ne(d.clone(), Expr::Int(0));
        if !out.contains(&g) {
            out.push(g);
        }
    }
}

pub(super) fn mutants(
    program: &Program,
    f: &Function,
    s: &Stmt,
    emit: &mut impl FnMut(LocationId, Expr, String),
) {
    let lookup = |n: &str| program.var_type(f, n);
    for e in s.own_exprs() {
        let mut subterms = Vec::new();
        e.walk(&mut |sub| subterms.push(sub));
        for sub in subterms {
            let Ok(ty) = type_of(sub, &lookup) else { continue };
            for (op, m) in operator_mutants(sub, ty) {
                if fold_constants(&m) == fold_constants(sub) {
                    continue;
                }
                // Orderings on bool operands are ill-typed.
                if type_of(&m, &lookup).ok() != Some(ty) {
                    continue;
                }
                let mut guards = Vec::new();
                guard_terms(sub, &mut guards);
                guard_terms(&m, &mut guards);
                let origin = format!(
                    "mutant {op} `{}` -> `{}` at line {}",
                    expr_to_string(sub),
                    expr_to_string(&m),
                    s.line
                );
                let differs = Expr::ne(sub.clone(), m);
                let pred = Expr::conj(guards.into_iter().chain(std::iter::once(differs)));
                emit(s.loc, pred, origin);
            }
        }
    }
}
