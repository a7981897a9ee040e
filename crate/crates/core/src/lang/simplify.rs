//! Syntactic expression rewriting: constant folding, negation normal form.

use crate::lang::ast::{BinOp, Expr, UnOp};

/// Value of an integer expression built only from literals, if it has one.
pub fn const_int(e: &Expr) -> Option<i64> {
    match e {
        Expr::Int(v) => Some(*v),
        Expr::Unary(UnOp::Neg, x) => const_int(x)?.checked_neg(),
        Expr::Unary(UnOp::Abs, x) => const_int(x)?.checked_abs(),
        Expr::Binary(op, l, r) if op.is_arith() => {
            let (a, b) = (const_int(l)?, const_int(r)?);
            match op {
                BinOp::Add => a.checked_add(b),
                BinOp::Sub => a.checked_sub(b),
                BinOp::Mul => a.checked_mul(b),
                BinOp::Div => {
                    if b == 0 {
                        None
                    } else {
                        a.checked_div(b)
                    }
                }
                _ => None,
            }
        }
        _ => None,
    }
}

/// Replaces literal-only integer subterms by their value. Used to decide
/// whether two expressions are the same up to trivial constant arithmetic.
pub fn fold_constants(e: &Expr) -> Expr {
    if let Some(v) = const_int(e) {
        return Expr::Int(v);
    }
    match e {
        Expr::Unary(op, x) => Expr::unary(*op, fold_constants(x)),
        Expr::Binary(op, l, r) => Expr::binary(*op, fold_constants(l), fold_constants(r)),
        other => other.clone(),
    }
}

/// Negation normal form of `e` (or of `!e` when `negate`): negations are pushed
/// through `&&`/`||` and absorbed into relations, so the only remaining `!`
/// sit directly on boolean variables.
pub fn nnf(e: &Expr, negate: bool) -> Expr {
    match e {
        Expr::Bool(b) => Expr::Bool(*b != negate),
        Expr::Unary(UnOp::Not, inner) => nnf(inner, !negate),
        Expr::Binary(op @ (BinOp::And | BinOp::Or), l, r) => {
            let op = match (op, negate) {
                (BinOp::And, true) => BinOp::Or,
                (BinOp::Or, true) => BinOp::And,
                (op, _) => *op,
            };
            Expr::binary(op, nnf(l, negate), nnf(r, negate))
        }
        Expr::Binary(op, l, r) if op.is_relational() && negate => Expr::binary(
            op.negated_relation().expect("relational"),
            (**l).clone(),
            (**r).clone(),
        ),
        other if negate => Expr::not(other.clone()),
        other => other.clone(),
    }
}

/// Logical negation, written in negation normal form.
pub fn negate(e: &Expr) -> Expr {
    nnf(e, true)
}

/// Atomic conditions of a decision: the leaves of its `&&`/`||` tree after
/// conversion to negation normal form, left to right.
pub fn atoms(decision: &Expr) -> Vec<Expr> {
    fn go(e: &Expr, out: &mut Vec<Expr>) {
        match e {
            Expr::Binary(BinOp::And | BinOp::Or, l, r) => {
                go(l, out);
                go(r, out);
            }
            leaf => out.push(leaf.clone()),
        }
    }
    let mut out = Vec::new();
    go(&nnf(decision, false), &mut out);
    out
}

/// Replaces the `index`-th atom (in `atoms` order) of the NNF of `decision` by `value`.
pub fn replace_atom(decision: &Expr, index: usize, value: bool) -> Expr {
    fn go(e: &Expr, index: usize, value: bool, counter: &mut usize) -> Expr {
        match e {
            Expr::Binary(op @ (BinOp::And | BinOp::Or), l, r) => {
                let l = go(l, index, value, counter);
                let r = go(r, index, value, counter);
                Expr::binary(*op, l, r)
            }
            leaf => {
                let here = *counter;
                *counter += 1;
                if here == index {
                    Expr::Bool(value)
                } else {
                    leaf.clone()
                }
            }
        }
    }
    go(&nnf(decision, false), index, value, &mut 0)
}

/// Boolean constant propagation plus a few identities on boolean `==`/`!=`.
pub fn simplify_bool(e: &Expr) -> Expr {
    match e {
        Expr::Unary(UnOp::Not, inner) => match simplify_bool(inner) {
            Expr::Bool(b) => Expr::Bool(!b),
            Expr::Unary(UnOp::Not, x) => *x,
            other => Expr::not(other),
        },
        Expr::Binary(BinOp::And, l, r) => match (simplify_bool(l), simplify_bool(r)) {
            (Expr::Bool(false), _) | (_, Expr::Bool(false)) => Expr::Bool(false),
            (Expr::Bool(true), x) | (x, Expr::Bool(true)) => x,
            (a, b) => Expr::and(a, b),
        },
        Expr::Binary(BinOp::Or, l, r) => match (simplify_bool(l), simplify_bool(r)) {
            (Expr::Bool(true), _) | (_, Expr::Bool(true)) => Expr::Bool(true),
            (Expr::Bool(false), x) | (x, Expr::Bool(false)) => x,
            (a, b) => Expr::or(a, b),
        },
        Expr::Binary(op @ (BinOp::Eq | BinOp::Ne), l, r) => {
            let (a, b) = (simplify_bool(l), simplify_bool(r));
            let want_equal = *op == BinOp::Eq;
            match (&a, &b) {
                (Expr::Bool(x), Expr::Bool(y)) => Expr::Bool((x == y) == want_equal),
                (Expr::Bool(c), other) | (other, Expr::Bool(c)) => {
                    // x == true is x; x != true is !x; and so on.
                    if *c == want_equal {
                        other.clone()
                    } else {
                        negate(other)
                    }
                }
                _ if a == b => Expr::Bool(want_equal),
                _ => Expr::binary(*op, a, b),
            }
        }
        other => other.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parser::parse_expr;
    use crate::lang::printer::expr_to_string;

    fn p(s: &str) -> Expr {
        parse_expr(s).unwrap()
    }

    #[test]
    fn negation_pushes_into_relations() {
        assert_eq!(expr_to_string(&negate(&p("x == y && y == z"))), "x != y || y != z");
        assert_eq!(expr_to_string(&negate(&p("!(a < b) || c"))), "a < b && !c");
    }

    #[test]
    fn atoms_are_nnf_leaves() {
        let a: Vec<String> = atoms(&p("!(x == y || b) && z > 0"))
            .iter()
            .map(expr_to_string)
            .collect();
        assert_eq!(a, vec!["x != y", "!b", "z > 0"]);
    }

    #[test]
    fn determination_of_conjunct() {
        let d = p("a && b");
        let t = replace_atom(&d, 0, true);
        let f = replace_atom(&d, 0, false);
        let det = simplify_bool(&Expr::ne(t, f));
        assert_eq!(det, p("b"));
    }

    #[test]
    fn const_folding_skips_division_by_zero() {
        assert_eq!(const_int(&p("abs(-3) * 2")), Some(6));
        assert_eq!(const_int(&p("1 / 0")), None);
        assert_eq!(const_int(&p("x + 1")), None);
    }
}
