//! Groups of co-reached labels.
//!
//! A run is a maximal straight-line stretch of one block that no statement
//! can leave early. Labels of one run are reached together, exactly once per
//! traversal. Loop-head labels of a loop form a run of their own. The single
//! run of a function called from exactly one place is spliced into the run
//! holding that call.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::annotate::AnnotatedProgram;
use crate::lang::ast::*;
use crate::lang::typeck::callees;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoReachedGroup {
    pub group_id: u32,
    /// In control-flow order.
    pub labels: Vec<LabelId>,
    /// Function whose body hosts the run (the caller, after merging).
    pub function: String,
    /// Last statement of the run in `function`: a label, or the call that
    /// brings in a merged callee's labels.
    #[serde(skip)]
    pub anchor: LocationId,
}

/// Whether calling `f` may fail to come back normally: it loops, exits,
/// may abort, or calls something that may.
pub fn may_interrupt(p: &Program, f: &Function) -> bool {
    interrupt_table(p)[&f.name]
}

pub(crate) fn interrupt_table(p: &Program) -> HashMap<String, bool> {
    fn visit(
        p: &Program,
        name: &str,
        table: &mut HashMap<String, bool>,
        on_stack: &mut BTreeSet<String>,
    ) -> bool {
        if let Some(&v) = table.get(name) {
            return v;
        }
        if !on_stack.insert(name.to_string()) {
            // Recursion may not terminate.
            return true;
        }
        let f = p.function(name).expect("resolved callee");
        let mut result = false;
        f.walk(&mut |s| {
            if matches!(s.kind, StmtKind::Exit | StmtKind::While { .. }) || may_abort(s) {
                result = true;
            }
        });
        if !result {
            for c in callees(f) {
                if visit(p, &c, table, on_stack) {
                    result = true;
                    break;
                }
            }
        }
        on_stack.remove(name);
        table.insert(name.to_string(), result);
        result
    }
    let mut table = HashMap::new();
    for f in &p.functions {
        visit(p, &f.name, &mut table, &mut BTreeSet::new());
    }
    table
}

/// The statement itself may stop the run: a failing assertion or a division
/// whose divisor is not a nonzero literal.
fn may_abort(s: &Stmt) -> bool {
    matches!(s.kind, StmtKind::Assert(_))
        || s.own_exprs().iter().any(|e| !e.risky_divisors().is_empty())
}

/// Whether control may fail to reach the statement following `s`.
pub(crate) fn interrupts(s: &Stmt, table: &HashMap<String, bool>) -> bool {
    match &s.kind {
        StmtKind::Break
        | StmtKind::Continue
        | StmtKind::Return(_)
        | StmtKind::Exit
        | StmtKind::While { .. } => true,
        StmtKind::Call { callee, .. } if table[callee] => true,
        StmtKind::If {
            then_block,
            else_block,
            ..
        } => {
            may_abort(s)
                || then_block
                    .stmts
                    .iter()
                    .chain(&else_block.stmts)
                    .any(|t| interrupts(t, table))
        }
        _ => may_abort(s),
    }
}

#[derive(Debug, Clone)]
enum Item {
    Label(LabelId, LocationId),
    Call(String, LocationId),
}

#[derive(Debug, Clone)]
struct Run {
    function: String,
    items: Vec<Item>,
}

struct Collector<'a> {
    table: &'a HashMap<String, bool>,
    runs: Vec<Run>,
    /// Index in `runs` of each function's top-level run, when it has exactly one.
    single_run: HashMap<String, usize>,
}

impl Collector<'_> {
    fn function(&mut self, f: &Function) {
        let first = self.runs.len();
        let splits = self.block(&f.name, &f.body, true);
        if !splits {
            self.single_run.insert(f.name.clone(), first);
        }
    }

    /// Collects the runs of `block`; returns whether any statement split it.
    fn block(&mut self, func: &str, block: &Block, top: bool) -> bool {
        let mut split = false;
        let mut current = self.runs.len();
        self.runs.push(Run {
            function: func.to_string(),
            items: Vec::new(),
        });
        let last = block.stmts.len().saturating_sub(1);
        for (i, s) in block.stmts.iter().enumerate() {
            match &s.kind {
                StmtKind::Label(id) => {
                    self.runs[current].items.push(Item::Label(*id, s.loc));
                    continue;
                }
                StmtKind::If {
                    then_block,
                    else_block,
                    ..
                } => {
                    self.block(func, then_block, false);
                    self.block(func, else_block, false);
                }
                StmtKind::While { head, body, .. } => {
                    self.runs.push(Run {
                        function: func.to_string(),
                        items: head
                            .iter()
                            .filter_map(|h| h.label_id().map(|id| Item::Label(id, h.loc)))
                            .collect(),
                    });
                    self.block(func, body, false);
                }
                StmtKind::Call { callee, .. } if !interrupts(s, self.table) => {
                    self.runs[current].items.push(Item::Call(callee.clone(), s.loc));
                }
                _ => {}
            }
            // A final `return` of a function body leaves nothing behind it.
            let trailing_return = top && i == last && matches!(s.kind, StmtKind::Return(_));
            if interrupts(s, self.table) && !trailing_return {
                split = true;
                current = self.runs.len();
                self.runs.push(Run {
                    function: func.to_string(),
                    items: Vec::new(),
                });
            }
        }
        split
    }
}

/// Computes the co-reached groups of `ap`, in control-flow order.
pub fn detect_blocks(ap: &AnnotatedProgram) -> Vec<CoReachedGroup> {
    let p = &ap.program;
    let table = interrupt_table(p);
    let mut c = Collector {
        table: &table,
        runs: Vec::new(),
        single_run: HashMap::new(),
    };
    for f in &p.functions {
        c.function(f);
    }

    let mut call_sites: HashMap<&str, usize> = HashMap::new();
    for f in &p.functions {
        f.walk(&mut |s| {
            if let StmtKind::Call { callee, .. } = &s.kind {
                *call_sites.entry(callee.as_str()).or_default() += 1;
            }
        });
    }
    let mut in_run: BTreeSet<&str> = BTreeSet::new();
    for run in &c.runs {
        for item in &run.items {
            if let Item::Call(callee, _) = item {
                in_run.insert(callee);
            }
        }
    }
    let merged: BTreeMap<&str, usize> = c
        .single_run
        .iter()
        .filter(|(name, _)| {
            name.as_str() != p.entry
                && call_sites.get(name.as_str()) == Some(&1)
                && !table[name.as_str()]
                && in_run.contains(name.as_str())
        })
        .map(|(name, &idx)| (name.as_str(), idx))
        .collect();
    let absorbed: BTreeSet<usize> = merged.values().copied().collect();

    fn expand(
        run: &Run,
        runs: &[Run],
        merged: &BTreeMap<&str, usize>,
        labels: &mut Vec<LabelId>,
        anchor: &mut Option<LocationId>,
    ) {
        for item in &run.items {
            match item {
                Item::Label(id, loc) => {
                    labels.push(*id);
                    *anchor = Some(*loc);
                }
                Item::Call(callee, loc) => {
                    if let Some(&idx) = merged.get(callee.as_str()) {
                        let before = labels.len();
                        let mut inner = None;
                        expand(&runs[idx], runs, merged, labels, &mut inner);
                        if labels.len() > before {
                            *anchor = Some(*loc);
                        }
                    }
                }
            }
        }
    }

    let mut groups = Vec::new();
    for (i, run) in c.runs.iter().enumerate() {
        if absorbed.contains(&i) {
            continue;
        }
        let mut labels = Vec::new();
        let mut anchor = None;
        expand(run, &c.runs, &merged, &mut labels, &mut anchor);
        if let Some(anchor) = anchor {
            groups.push(CoReachedGroup {
                group_id: groups.len() as u32 + 1,
                labels,
                function: run.function.clone(),
                anchor,
            });
        }
    }
    groups
}

/// Unordered label pairs a proof search must consider at three granularities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub block: u64,
    pub function: u64,
    pub program: u64,
}

fn pairs(k: u64) -> u64 {
    k * k.saturating_sub(1) / 2
}

/// A label counts towards the function hosting its group, so the labels of a
/// callee merged into its caller count towards the caller.
pub fn pair_counts(ap: &AnnotatedProgram, groups: &[CoReachedGroup]) -> PairCounts {
    let mut host = ap.label_functions();
    for g in groups {
        for l in &g.labels {
            host.insert(*l, g.function.clone());
        }
    }
    let mut per_function: HashMap<String, u64> = HashMap::new();
    for f in host.into_values() {
        *per_function.entry(f).or_default() += 1;
    }
    PairCounts {
        block: groups.iter().map(|g| pairs(g.labels.len() as u64)).sum(),
        function: per_function.values().map(|&n| pairs(n)).sum(),
        program: pairs(ap.labels.len() as u64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{parse, parse_annotated};

    fn ids(groups: &[CoReachedGroup]) -> Vec<Vec<u32>> {
        groups
            .iter()
            .map(|g| g.labels.iter().map(|l| l.0).collect())
            .collect()
    }

    fn lbl(id: u32) -> String {
        format!("// label({id}, \"true\", dc)\n")
    }

    #[test]
    fn straight_line_is_one_group() {
        let src = format!(
            "int main(int x){{ {} x = x + 1; {} int y = x * 2; {} return y; }}",
            lbl(1),
            lbl(2),
            lbl(3)
        );
        let ap = parse_annotated(&src).unwrap();
        assert_eq!(ids(&detect_blocks(&ap)), vec![vec![1, 2, 3]]);
    }

    #[test]
    fn loops_split_and_isolate_bodies() {
        let src = format!(
            "int main(int x){{ {}
               {}while(x > 0){{ {} x = x - 1; {} }}
               {} return x; }}",
            lbl(1),
            "// label(2, \"x > 0\", dc, head)\n",
            lbl(3),
            lbl(4),
            lbl(5)
        );
        let ap = parse_annotated(&src).unwrap();
        assert_eq!(ids(&detect_blocks(&ap)), vec![vec![1], vec![2], vec![3, 4], vec![5]]);
    }

    #[test]
    fn risky_division_splits() {
        let src = format!(
            "int main(int x){{ {} int y = 10 / x; {} int z = y / 2; {} return z; }}",
            lbl(1),
            lbl(2),
            lbl(3)
        );
        let ap = parse_annotated(&src).unwrap();
        assert_eq!(ids(&detect_blocks(&ap)), vec![vec![1], vec![2, 3]]);
    }

    #[test]
    fn may_interrupt_cases() {
        let p = parse(
            "int sq(int a){ return a * a; }
             void e(){ exit; }
             void g(){ e(); }
             int r(int a){ int b = r(a); return b; }
             int main(int x){ g(); int y = sq(x); return y; }",
        )
        .unwrap();
        let mi = |n: &str| may_interrupt(&p, p.function(n).unwrap());
        assert!(!mi("sq"));
        assert!(mi("e"));
        assert!(mi("g"));
        assert!(mi("r"));
        assert!(mi("main"));
    }

    #[test]
    fn callee_called_twice_is_not_merged() {
        let src = format!(
            "void f(){{ {} }} int main(){{ {} f(); f(); {} return 0; }}",
            lbl(1),
            lbl(2),
            lbl(3)
        );
        let ap = parse_annotated(&src).unwrap();
        assert_eq!(ids(&detect_blocks(&ap)), vec![vec![1], vec![2, 3]]);
    }

    #[test]
    fn merge_is_transitive() {
        let src = format!(
            "void h(){{ {} }} void g(){{ {} h(); }} int main(){{ {} g(); {} return 0; }}",
            lbl(1),
            lbl(2),
            lbl(3),
            lbl(4)
        );
        let ap = parse_annotated(&src).unwrap();
        let groups = detect_blocks(&ap);
        assert_eq!(ids(&groups), vec![vec![3, 2, 1, 4]]);
        assert_eq!(groups[0].function, "main");
    }

    #[test]
    fn pair_counts_order() {
        let src = format!(
            "int main(int x){{ {} {} if (x > 0) {{ {} {} }} return 0; }}",
            lbl(1),
            lbl(2),
            lbl(3),
            lbl(4)
        );
        let ap = parse_annotated(&src).unwrap();
        let g = detect_blocks(&ap);
        let c = pair_counts(&ap, &g);
        assert_eq!(
            c,
            PairCounts {
                block: 2,
                function: 6,
                program: 6
            }
        );
    }

    fn fixture(name: &str) -> AnnotatedProgram {
        let path = format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
        parse_annotated(&std::fs::read_to_string(path).unwrap()).unwrap()
    }

    #[test]
    fn figure_three_groups() {
        let groups = detect_blocks(&fixture("fig3.lwl"));
        assert_eq!(ids(&groups), vec![vec![2], vec![3, 4, 1], vec![5, 6], vec![7]]);
    }

    #[test]
    fn triangle_groups() {
        let groups = detect_blocks(&fixture("triangle.lwl"));
        assert_eq!(ids(&groups), vec![(1..=10).collect::<Vec<_>>(), (11..=14).collect()]);
    }
}
