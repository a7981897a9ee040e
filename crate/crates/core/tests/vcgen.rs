use std::collections::HashMap;

use lclean_core::annotate::AnnotatedProgram;
use lclean_core::blocks::detect_blocks;
use lclean_core::lang::ast::LabelId;
use lclean_core::lang::parse_annotated;
use lclean_core::lang::value::Value;
use lclean_core::logic::Sort;
use lclean_core::status::{LabelStatus, Status, StatusMap};
use lclean_core::vcgen::*;

fn fixture(name: &str) -> AnnotatedProgram {
    let path = format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    parse_annotated(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Whether `vc` holds for every assignment of its variables in a small box.
fn valid_in_box(vc: &VerificationCondition, lo: i64, hi: i64) -> bool {
    let vars = vc.store.vars(&[vc.goal]);
    let mut env: HashMap<&str, Value> = HashMap::new();
    fn go<'a>(
        vc: &VerificationCondition,
        vars: &'a [(String, Sort)],
        i: usize,
        env: &mut HashMap<&'a str, Value>,
        lo: i64,
        hi: i64,
    ) -> bool {
        if i == vars.len() {
            return vc.store.eval(vc.goal, env) == Some(Value::Bool(true));
        }
        let (name, sort) = &vars[i];
        let values: Vec<Value> = match sort {
            Sort::Int => (lo..=hi).map(Value::int).collect(),
            Sort::Bool => vec![Value::Bool(false), Value::Bool(true)],
        };
        values.into_iter().all(|v| {
            env.insert(name.as_str(), v);
            go(vc, vars, i + 1, env, lo, hi)
        })
    }
    go(vc, &vars, 0, &mut env, lo, hi)
}

fn infeasible(ids: &[u32]) -> StatusMap {
    ids.iter()
        .map(|&i| {
            (
                LabelId(i),
                LabelStatus {
                    id: LabelId(i),
                    status: Status::Infeasible,
                    step: 1,
                },
            )
        })
        .collect()
}

fn find<'a>(vcs: &'a [VerificationCondition], id: &str) -> &'a VerificationCondition {
    vcs.iter().find(|v| v.id == id).unwrap_or_else(|| panic!("no {id}"))
}

#[test]
fn triangle_vc_counts() {
    let ap = fixture("triangle.lwl");
    let groups = detect_blocks(&ap);
    assert_eq!(gen_step1(&ap).len(), 14);
    let st = infeasible(&[9, 10]);
    assert_eq!(gen_step2(&ap, &st).len(), 12);
    let mut st2 = st.clone();
    st2.insert(
        LabelId(12),
        LabelStatus {
            id: LabelId(12),
            status: Status::DuplicateOf(LabelId(11)),
            step: 2,
        },
    );
    let plans = gen_step3(&groups, &st2);
    let total: usize = plans.iter().map(|(_, a)| a.len()).sum();
    assert_eq!(total, 56 + 6);
}

#[test]
fn triangle_step1_goals() {
    let ap = fixture("triangle.lwl");
    let groups = detect_blocks(&ap);
    let vcs = wp(&ap, &groups, &gen_step1(&ap));
    assert_eq!(vcs[0].id, "vc_step1_l1");
    assert!(valid_in_box(find(&vcs, "vc_step1_l9"), -2, 2));
    assert!(valid_in_box(find(&vcs, "vc_step1_l10"), -2, 2));
    for l in [1, 2, 5, 6, 11, 13] {
        assert!(!valid_in_box(find(&vcs, &format!("vc_step1_l{l}")), -2, 2), "l{l}");
    }
    assert_eq!(find(&vcs, "vc_step1_l1").logic(), "QF_LIA");
    let smt = find(&vcs, "vc_step1_l9").smtlib();
    assert!(smt.contains("(declare-const |x| Int)"), "{smt}");
    assert!(smt.ends_with("(check-sat)\n"));
}

#[test]
fn triangle_step2_goals() {
    let ap = fixture("triangle.lwl");
    let groups = detect_blocks(&ap);
    let vcs = wp(&ap, &groups, &gen_step2(&ap, &infeasible(&[9, 10])));
    assert!(valid_in_box(find(&vcs, "vc_step2_l11"), -3, 3));
    assert!(valid_in_box(find(&vcs, "vc_step2_l12"), -3, 3));
    for l in [1, 3, 6, 13, 14] {
        assert!(!valid_in_box(find(&vcs, &format!("vc_step2_l{l}")), -3, 3), "l{l}");
    }
}

#[test]
fn triangle_step3_goals() {
    let ap = fixture("triangle.lwl");
    let groups = detect_blocks(&ap);
    let plans = gen_step3(&groups, &infeasible(&[9, 10]));
    let asserts: Vec<Assertion> = plans.into_iter().flat_map(|(_, a)| a).collect();
    let vcs = wp(&ap, &groups, &asserts);
    let holds = |a: u32, b: u32| {
        let g = if a >= 11 { 2 } else { 1 };
        valid_in_box(find(&vcs, &format!("vc_step3_g{g}_l{a}_l{b}")), -2, 2)
    };
    for (a, b) in [(3, 7), (7, 3), (4, 8), (8, 4), (1, 3), (1, 5), (3, 5), (6, 4), (6, 2), (4, 2), (13, 14), (14, 13), (13, 11), (12, 11)] {
        assert!(holds(a, b), "l{a} => l{b}");
    }
    for (a, b) in [(3, 1), (5, 1), (2, 4), (11, 13), (1, 6)] {
        assert!(!holds(a, b), "l{a} => l{b}");
    }
}

#[test]
fn merged_callee_is_inlined() {
    let ap = fixture("fig3.lwl");
    let groups = detect_blocks(&ap);
    let plans = gen_step3(&groups, &StatusMap::new());
    let asserts: Vec<Assertion> = plans.into_iter().flat_map(|(_, a)| a).collect();
    let vcs = wp(&ap, &groups, &asserts);
    let pair = |a: u32, b: u32| {
        vcs.iter()
            .find(|v| matches!(v.purpose, Purpose::Implies { from, to, .. } if from == LabelId(a) && to == LabelId(b)))
            .unwrap_or_else(|| panic!("no pair {a} {b}"))
    };
    assert_eq!(pair(3, 4).function, "main");
    assert!(valid_in_box(pair(3, 4), -3, 3));
    assert!(valid_in_box(pair(4, 3), -3, 3));
    assert!(valid_in_box(pair(1, 3), -3, 3));
    assert!(!valid_in_box(pair(3, 1), -3, 3));
    // The call in front of l6 is not part of this group, so it stays havocked.
    assert!(!valid_in_box(pair(5, 6), -3, 3));
    let names: Vec<String> = pair(3, 4).store.vars(&[pair(3, 4).goal]).into_iter().map(|v| v.0).collect();
    assert!(names.iter().all(|n| !n.starts_with("f.")), "{names:?}");
}

#[test]
fn calls_and_loops_are_havocked() {
    let src = r#"
int g = 0;
void bump() { g = g + 1; }
int main(int n) {
  int i = 0;
  while (i < n) {
    i = i + 1;
  }
  // label(1, "i >= n", cc)
  // label(2, "i == n", cc)
  g = 5;
  bump();
  // label(3, "g == 5", cc)
  // label(4, "n < 0 || n > 0 || n == 0", cc)
  return i;
}
"#;
    let ap = parse_annotated(src).unwrap();
    let groups = detect_blocks(&ap);
    let vcs = wp(&ap, &groups, &gen_step2(&ap, &StatusMap::new()));
    assert!(valid_in_box(&vcs[0], -2, 2));
    assert!(!valid_in_box(&vcs[1], -2, 2));
    assert!(!valid_in_box(&vcs[2], -2, 2));
    assert!(valid_in_box(&vcs[3], -2, 2));
    let names: Vec<String> = vcs[0].store.vars(&[vcs[0].goal]).into_iter().map(|v| v.0).collect();
    assert!(names.contains(&"i$1".to_string()), "{names:?}");
}

#[test]
fn division_guards() {
    let src = r#"
int main(int x, int y) {
  int q = 0;
  if (y != 0 && x / y > 1) {
    // label(1, "y != 0", cc)
    q = 1;
  }
  // label(2, "x / y == x / y", cc)
  // label(3, "x / 2 * 2 <= x || x < 0", cc)
  return q;
}
"#;
    let ap = parse_annotated(src).unwrap();
    let groups = detect_blocks(&ap);
    let vcs = wp(&ap, &groups, &gen_step2(&ap, &StatusMap::new()));
    assert!(valid_in_box(&vcs[0], -3, 3));
    // Strict evaluation makes the predicate false when y is zero.
    assert!(!valid_in_box(&vcs[1], -3, 3));
    assert!(valid_in_box(&vcs[2], -5, 5));
    assert_eq!(vcs[1].logic(), "QF_NIA");
}

#[test]
fn pair_duplicate_rule() {
    let src = r#"
int main(int x) {
  // label(1, "true", cc)
  // label(2, "x > 0", dc)
  // label(3, "x <= 0", dc)
  if (x > 0) {
    x = 1;
  }
  // label(4, "true", cc)
  // label(5, "x / 2 > 0", dc)
  // label(6, "x / 2 <= 0", dc)
  if (x / 2 > 0) {
    x = 2;
  }
  return x;
}
"#;
    let ap = parse_annotated(src).unwrap();
    let d = pair_duplicates(&ap, &StatusMap::new());
    assert_eq!(
        d,
        vec![LabelStatus {
            id: LabelId(1),
            status: Status::DuplicateOfPair(LabelId(2), LabelId(3)),
            step: 2
        }]
    );
    let d = pair_duplicates(&ap, &infeasible(&[3]));
    assert_eq!(d[0].status, Status::DuplicateOf(LabelId(2)));
}

#[test]
fn purpose_names() {
    assert_eq!(Purpose::Infeasible { label: LabelId(9) }.name(), "step1_l9");
    assert_eq!(Purpose::AlwaysTrue { label: LabelId(3) }.name(), "step2_l3");
    let p = Purpose::Implies {
        group: 1,
        from: LabelId(1),
        to: LabelId(3),
    };
    assert_eq!(p.name(), "step3_g1_l1_l3");
    assert_eq!(p.step(), 3);
}
