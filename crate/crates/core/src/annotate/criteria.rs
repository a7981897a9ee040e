use crate::annotate::Criterion;
use crate::lang::ast::{Expr, LocationId, Stmt};
use crate::lang::simplify::{atoms, negate, nnf, replace_atom, simplify_bool};

pub const MCC_MAX_CONDITIONS: usize = 8;

pub(super) fn decision_labels(
    criterion: Criterion,
    decision: &Expr,
    s: &Stmt,
    emit: &mut impl FnMut(LocationId, Expr, String),
) {
    let at = format!("decision at line {}", s.line);
    match criterion {
        Criterion::Dc => {
            emit(s.loc, decision.clone(), format!("{at}, value=true"));
            emit(s.loc, negate(decision), format!("{at}, value=false"));
        }
        Criterion::Cc => {
            for (i, c) in atoms(decision).iter().enumerate() {
                emit(s.loc, c.clone(), format!("clause {} of {at}, value=true", i + 1));
                emit(s.loc, negate(c), format!("clause {} of {at}, value=false", i + 1));
            }
        }
        Criterion::Mcc => {
            let cs = atoms(decision);
            let n = cs.len();
            if n > MCC_MAX_CONDITIONS {
                log::warn!(
                    "{at}: {n} conditions exceed the MCC limit of {MCC_MAX_CONDITIONS}; skipped"
                );
                return;
            }
            for combo in 0u32..(1 << n) {
                let mut values = String::new();
                let parts = cs.iter().enumerate().map(|(i, c)| {
                    let negated = combo & (1 << (n - 1 - i)) != 0;
                    values.push(if negated { 'F' } else { 'T' });
                    if negated {
                        negate(c)
                    } else {
                        c.clone()
                    }
                });
                let pred = Expr::conj(parts.collect::<Vec<_>>());
                emit(s.loc, pred, format!("combination {values} of {at}"));
            }
        }
        Criterion::Gacc => {
            let cs = atoms(decision);
            for (i, c) in cs.iter().enumerate() {
                let det = simplify_bool(&Expr::ne(
                    replace_atom(decision, i, true),
                    replace_atom(decision, i, false),
                ));
                let det = nnf(&det, false);
                for value in [true, false] {
                    let clause = if value { c.clone() } else { negate(c) };
                    let pred = simplify_bool(&Expr::and(clause, det.clone()));
                    emit(
                        s.loc,
                        pred,
                        format!("clause {} of {at} active, value={value}", i + 1),
                    );
                }
            }
        }
        Criterion::Wm => unreachable!("mutation labels are generated per expression"),
    }
}

#[cfg(test)]
mod tests {
    use crate::annotate::*;
    use crate::lang::parse;
    use crate::lang::printer::expr_to_string;

    fn preds(src: &str, c: Criterion) -> Vec<String> {
        annotate_program(&parse(src).unwrap(), c)
            .labels
            .iter()
            .map(|l| expr_to_string(&l.predicate))
            .collect()
    }

    const AB: &str = "int main(bool a, bool b){ if(a && b){ return 1; } return 0; }";

    #[test]
    fn mcc_enumerates_combinations() {
        assert_eq!(
            preds(AB, Criterion::Mcc),
            vec!["a && b", "a && !b", "!a && b", "!a && !b"]
        );
        let single = "int main(int x){ if(x > 0){ return 1; } return 0; }";
        assert_eq!(preds(single, Criterion::Mcc), preds(single, Criterion::Cc));
    }

    #[test]
    fn gacc_uses_determination() {
        assert_eq!(
            preds(AB, Criterion::Gacc),
            vec!["a && b", "!a && b", "b && a", "!b && a"]
        );
        let single = "int main(int x){ if(x > 0){ return 1; } return 0; }";
        assert_eq!(preds(single, Criterion::Gacc), preds(single, Criterion::Cc));
    }

    #[test]
    fn cc_counts_two_per_condition() {
        let src = "int main(int x, int y){ if(x > 0 || y > 0 && x != y){ return 1; } while(x < 3){ x = x + 1; } return 0; }";
        assert_eq!(preds(src, Criterion::Cc).len(), 2 * 4);
    }

    #[test]
    fn mcc_skips_wide_decisions() {
        let conds: Vec<String> = (0..9).map(|i| format!("x != {i}")).collect();
        let src = format!("int main(int x){{ if({}){{ return 1; }} return 0; }}", conds.join(" && "));
        assert!(preds(&src, Criterion::Mcc).is_empty());
    }
}
