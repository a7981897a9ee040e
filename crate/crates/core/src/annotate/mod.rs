//! Labels and automatic annotation for coverage criteria.

mod criteria;
mod mutation;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lang::ast::*;
use crate::lang::parser::parse_expr;
use crate::lang::printer::{expr_to_string, program_to_string};
use crate::lang::typeck;

pub use criteria::MCC_MAX_CONDITIONS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Dc,
    Cc,
    Mcc,
    Gacc,
    Wm,
}

impl Criterion {
    pub const ALL: [Criterion; 5] = [
        Criterion::Dc,
        Criterion::Cc,
        Criterion::Mcc,
        Criterion::Gacc,
        Criterion::Wm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::Dc => "dc",
            Criterion::Cc => "cc",
            Criterion::Mcc => "mcc",
            Criterion::Gacc => "gacc",
            Criterion::Wm => "wm",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Criterion {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let lower = s.trim().to_ascii_lowercase();
        Criterion::ALL
            .into_iter()
            .find(|c| c.name() == lower)
            .ok_or_else(|| format!("unknown criterion `{s}` (expected dc, cc, mcc, gacc or wm)"))
    }
}

/// A test objective: reach `location` in a state satisfying `predicate`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Label {
    pub id: LabelId,
    /// Location of the label statement itself.
    pub location: LocationId,
    pub predicate: Expr,
    pub criterion: Criterion,
    pub origin: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedProgram {
    pub program: Program,
    /// Sorted by id.
    pub labels: Vec<Label>,
}

impl AnnotatedProgram {
    pub fn unlabelled(program: Program) -> AnnotatedProgram {
        AnnotatedProgram {
            program,
            labels: Vec::new(),
        }
    }

    pub fn label(&self, id: LabelId) -> Option<&Label> {
        self.labels
            .binary_search_by_key(&id, |l| l.id)
            .ok()
            .map(|i| &self.labels[i])
    }

    pub fn next_id(&self) -> u32 {
        self.labels.last().map_or(1, |l| l.id.0 + 1)
    }

    /// `.lwl` source text.
    pub fn to_source(&self) -> String {
        program_to_string(&self.program, &self.labels)
    }

    /// Function owning each label.
    pub fn label_functions(&self) -> HashMap<LabelId, String> {
        let mut out = HashMap::new();
        self.program.walk(&mut |f, s| {
            if let Some(id) = s.label_id() {
                out.insert(id, f.name.clone());
            }
        });
        out
    }
}

/// Labels in id order.
pub fn list_labels(ap: &AnnotatedProgram) -> Vec<Label> {
    ap.labels.clone()
}

/// A label that still has to be placed: it goes immediately before the
/// statement at `before` (into the loop head when that statement is a `while`).
#[derive(Debug, Clone)]
pub struct Placement {
    pub before: LocationId,
    pub label: Label,
}

/// Inserts label statements. Locations of the result are renumbered and the
/// returned labels carry the locations of their new statements.
pub fn insert_labels(ap: &AnnotatedProgram, new: Vec<Placement>) -> Result<AnnotatedProgram> {
    let mut ids: BTreeSet<LabelId> = ap.labels.iter().map(|l| l.id).collect();
    for p in &new {
        if !ids.insert(p.label.id) {
            return Err(Error::Label(format!("duplicate label id {}", p.label.id)));
        }
    }
    let mut by_target: BTreeMap<LocationId, Vec<LabelId>> = BTreeMap::new();
    for p in &new {
        by_target.entry(p.before).or_default().push(p.label.id);
    }
    let mut program = ap.program.clone();
    let mut placed = 0;
    for f in &mut program.functions {
        insert_into_block(&mut f.body, &by_target, &mut placed);
    }
    if placed != new.len() {
        let known: BTreeSet<LocationId> = {
            let mut s = BTreeSet::new();
            ap.program.walk(&mut |_, st| {
                s.insert(st.loc);
            });
            s
        };
        let bad = new.iter().find(|p| !known.contains(&p.before)).map(|p| p.before);
        return Err(Error::Label(format!(
            "no statement at location {}",
            bad.map_or("?".to_string(), |l| l.to_string())
        )));
    }
    program.renumber();

    let mut labels: Vec<Label> = ap
        .labels
        .iter()
        .cloned()
        .chain(new.into_iter().map(|p| p.label))
        .collect();
    let preds: HashMap<LabelId, Expr> = labels
        .iter()
        .map(|l| (l.id, l.predicate.clone()))
        .collect();
    typeck::check(&mut program, &preds)?;
    let mut locs = HashMap::new();
    program.walk(&mut |_, s| {
        if let Some(id) = s.label_id() {
            locs.insert(id, s.loc);
        }
    });
    for l in &mut labels {
        l.location = locs[&l.id];
    }
    labels.sort_by_key(|l| l.id);
    Ok(AnnotatedProgram { program, labels })
}

fn label_stmt(id: LabelId, line: u32) -> Stmt {
    Stmt {
        loc: LocationId(0),
        line,
        kind: StmtKind::Label(id),
    }
}

fn insert_into_block(
    block: &mut Block,
    by_target: &BTreeMap<LocationId, Vec<LabelId>>,
    placed: &mut usize,
) {
    let old = std::mem::take(&mut block.stmts);
    for mut s in old {
        if let Some(ids) = by_target.get(&s.loc) {
            *placed += ids.len();
            let line = s.line;
            if let StmtKind::While { head, .. } = &mut s.kind {
                head.extend(ids.iter().map(|&id| label_stmt(id, line)));
            } else {
                block
                    .stmts
                    .extend(ids.iter().map(|&id| label_stmt(id, line)));
            }
        }
        match &mut s.kind {
            StmtKind::If {
                then_block,
                else_block,
                ..
            } => {
                insert_into_block(then_block, by_target, placed);
                insert_into_block(else_block, by_target, placed);
            }
            StmtKind::While { body, .. } => insert_into_block(body, by_target, placed),
            _ => {}
        }
        block.stmts.push(s);
    }
}

/// Annotates `ap` with fresh labels for `criterion`, numbered after its existing labels.
pub fn annotate(ap: &AnnotatedProgram, criterion: Criterion) -> AnnotatedProgram {
    let mut next = ap.next_id();
    let mut placements = Vec::new();
    let mut emit = |before: LocationId, predicate: Expr, origin: String| {
        placements.push(Placement {
            before,
            label: Label {
                id: LabelId(next),
                location: before,
                predicate,
                criterion,
                origin,
            },
        });
        next += 1;
    };
    let program = &ap.program;
    for f in &program.functions {
        f.walk(&mut |s| match criterion {
            Criterion::Wm => mutation::mutants(program, f, s, &mut emit),
            _ => {
                if let StmtKind::If { cond, .. } | StmtKind::While { cond, .. } = &s.kind {
                    criteria::decision_labels(criterion, cond, s, &mut emit);
                }
            }
        });
    }
    insert_labels(ap, placements).expect("generated labels are well-formed")
}

pub fn annotate_program(p: &Program, criterion: Criterion) -> AnnotatedProgram {
    annotate(&AnnotatedProgram::unlabelled(p.clone()), criterion)
}

pub fn annotate_dc(p: &Program) -> AnnotatedProgram {
    annotate_program(p, Criterion::Dc)
}

pub fn annotate_cc(p: &Program) -> AnnotatedProgram {
    annotate_program(p, Criterion::Cc)
}

pub fn annotate_mcc(p: &Program) -> AnnotatedProgram {
    annotate_program(p, Criterion::Mcc)
}

pub fn annotate_gacc(p: &Program) -> AnnotatedProgram {
    annotate_program(p, Criterion::Gacc)
}

pub fn annotate_wm(p: &Program) -> AnnotatedProgram {
    annotate_program(p, Criterion::Wm)
}

/// One entry of the `labels.json` sidecar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub id: u32,
    pub location: u32,
    pub predicate: String,
    pub criterion: Criterion,
    pub origin: String,
}

impl From<&Label> for LabelRecord {
    fn from(l: &Label) -> Self {
        LabelRecord {
            id: l.id.0,
            location: l.location.0,
            predicate: expr_to_string(&l.predicate),
            criterion: l.criterion,
            origin: l.origin.clone(),
        }
    }
}

impl LabelRecord {
    pub fn to_label(&self) -> Result<Label> {
        Ok(Label {
            id: LabelId(self.id),
            location: LocationId(self.location),
            predicate: parse_expr(&self.predicate)?,
            criterion: self.criterion,
            origin: self.origin.clone(),
        })
    }
}

pub fn labels_to_json(labels: &[Label]) -> String {
    let records: Vec<LabelRecord> = labels.iter().map(LabelRecord::from).collect();
    serde_json::to_string_pretty(&records).expect("records serialize")
}

pub fn labels_from_json(text: &str) -> std::result::Result<Vec<Label>, String> {
    let records: Vec<LabelRecord> = serde_json::from_str(text).map_err(|e| e.to_string())?;
    records
        .iter()
        .map(|r| r.to_label().map_err(|e| e.to_string()))
        .collect()
}
