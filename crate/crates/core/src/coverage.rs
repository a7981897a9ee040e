//! Coverage measurement, pruned coverage ratios, the dynamic baseline and
//! the exhaustive soundness oracle.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;
use std::path::Path;

use serde::Serialize;

use crate::annotate::AnnotatedProgram;
use crate::error::{Error, Result};
use crate::lang::ast::{LabelId, Type};
use crate::lang::interp::{covered_labels, TestDatum};
use crate::lang::value::Value;
use crate::status::{Status, StatusMap};

/// Default ceiling on the number of executions of [`oracle_check`].
pub const ORACLE_LIMIT: u64 = 10_000_000;

/// Fixed-length bit vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Bits {
    len: usize,
    words: Vec<u64>,
}

impl Bits {
    pub fn new(len: usize) -> Bits {
        Bits {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn set(&mut self, i: usize) {
        assert!(i < self.len, "bit {i} out of range");
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn get(&self, i: usize) -> bool {
        i < self.len && self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn none(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_subset(&self, other: &Bits) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    pub fn union(&self, other: &Bits) -> Bits {
        Bits {
            len: self.len,
            words: self.words.iter().zip(&other.words).map(|(a, b)| a | b).collect(),
        }
    }

    /// First position set here but not in `other`.
    pub fn first_outside(&self, other: &Bits) -> Option<usize> {
        (0..self.len).find(|&i| self.get(i) && !other.get(i))
    }
}

/// Per label, which tests of a suite cover it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageVector {
    pub tests: usize,
    pub rows: BTreeMap<LabelId, Bits>,
}

impl CoverageVector {
    pub fn covered(&self, id: LabelId) -> bool {
        self.rows.get(&id).is_some_and(|r| !r.none())
    }
}

/// Runs every test of `suite`, sharded over the available cores.
pub fn measure(ap: &AnnotatedProgram, suite: &[TestDatum], fuel: u64) -> Result<CoverageVector> {
    let shards = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(suite.len().max(1));
    let chunk = suite.len().div_ceil(shards).max(1);
    let per_test: Vec<Result<BTreeSet<LabelId>>> = std::thread::scope(|s| {
        let handles: Vec<_> = suite
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|t| covered_labels(&ap.program, &ap.labels, t, fuel))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("coverage worker"))
            .collect()
    });
    let mut rows: BTreeMap<LabelId, Bits> = ap.labels.iter().map(|l| (l.id, Bits::new(suite.len()))).collect();
    for (k, covered) in per_test.into_iter().enumerate() {
        for id in covered? {
            rows.get_mut(&id).expect("known label").set(k);
        }
    }
    Ok(CoverageVector {
        tests: suite.len(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelCoverage {
    pub id: LabelId,
    pub covered: bool,
    pub status: &'static str,
    /// Counts towards the pruned ratio.
    pub surviving: bool,
    /// Covered itself or through one of its duplicates.
    pub credited: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub tests: usize,
    pub total: usize,
    pub covered: usize,
    pub raw_ratio: f64,
    pub surviving: usize,
    pub covered_surviving: usize,
    pub pruned_ratio: f64,
    /// No label survives pruning; the pruned ratio is 1 by convention.
    pub vacuous: bool,
    pub labels: Vec<LabelCoverage>,
}

impl CoverageReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<8} {:<8} {:<16} {:<10}", "label", "covered", "status", "surviving");
        for l in &self.labels {
            let _ = writeln!(
                out,
                "{:<8} {:<8} {:<16} {:<10}",
                l.id.to_string(),
                if l.covered { "yes" } else { "no" },
                l.status,
                if l.surviving { "yes" } else { "no" }
            );
        }
        let _ = writeln!(
            out,
            "raw coverage     {}/{} = {:.1}%",
            self.covered,
            self.total,
            self.raw_ratio * 100.0
        );
        let _ = writeln!(
            out,
            "pruned coverage  {}/{} = {:.1}%{}",
            self.covered_surviving,
            self.surviving,
            self.pruned_ratio * 100.0,
            if self.vacuous { " (vacuous)" } else { "" }
        );
        out
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Raw ratio over all labels; pruned ratio over labels without a verdict.
pub fn adjust(vecs: &CoverageVector, statuses: &StatusMap) -> CoverageReport {
    let status_of = |id: LabelId| statuses.get(&id).map(|s| &s.status).unwrap_or(&Status::Unknown);
    let mut duplicates: BTreeMap<LabelId, Vec<LabelId>> = BTreeMap::new();
    for s in statuses.values() {
        if let Status::DuplicateOf(r) = s.status {
            duplicates.entry(r).or_default().push(s.id);
        }
    }
    let mut labels = Vec::new();
    for &id in vecs.rows.keys() {
        let covered = vecs.covered(id);
        let surviving = *status_of(id) == Status::Unknown;
        let credited = covered
            || duplicates
                .get(&id)
                .is_some_and(|ds| ds.iter().any(|&d| vecs.covered(d)));
        labels.push(LabelCoverage {
            id,
            covered,
            status: status_of(id).kind(),
            surviving,
            credited,
        });
    }
    let total = labels.len();
    let covered = labels.iter().filter(|l| l.covered).count();
    let surviving = labels.iter().filter(|l| l.surviving).count();
    let covered_surviving = labels.iter().filter(|l| l.surviving && l.credited).count();
    CoverageReport {
        tests: vecs.tests,
        total,
        covered,
        raw_ratio: ratio(covered, total),
        surviving,
        covered_surviving,
        pruned_ratio: ratio(covered_surviving, surviving),
        vacuous: surviving == 0,
        labels,
    }
}

/// Marks suggested by a test suite alone. They are unsound: a weak suite
/// makes distinct labels look alike.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LikelyMarks {
    pub infeasible: BTreeSet<LabelId>,
    /// Unordered pairs with identical rows, smaller id first.
    pub duplicates: BTreeSet<(LabelId, LabelId)>,
    /// `(l, s)`: every test covering `s` covers `l`, and not conversely.
    pub subsumed: BTreeSet<(LabelId, LabelId)>,
}

impl LikelyMarks {
    /// Labels carrying at least one likely mark.
    pub fn marked(&self) -> BTreeSet<LabelId> {
        let mut out = self.infeasible.clone();
        for &(a, b) in &self.duplicates {
            out.insert(a);
            out.insert(b);
        }
        out.extend(self.subsumed.iter().map(|&(l, _)| l));
        out
    }
}

pub fn dynamic_detect(vecs: &CoverageVector) -> LikelyMarks {
    let mut m = LikelyMarks::default();
    let rows: Vec<(&LabelId, &Bits)> = vecs.rows.iter().collect();
    for (i, &(&a, ra)) in rows.iter().enumerate() {
        if ra.none() {
            m.infeasible.insert(a);
        }
        for &(&b, rb) in &rows[i + 1..] {
            if ra == rb {
                m.duplicates.insert((a, b));
            } else if rb.is_subset(ra) {
                m.subsumed.insert((a, b));
            } else if ra.is_subset(rb) {
                m.subsumed.insert((b, a));
            }
        }
    }
    m
}

/// Every input vector of the entry function over `min..=max` (booleans take both values).
pub fn exhaustive_suite(ap: &AnnotatedProgram, min: i64, max: i64, limit: u64) -> Result<Vec<TestDatum>> {
    let params = &ap.program.entry_function().params;
    let width = (max as i128 - min as i128 + 1).max(0) as u128;
    let size = params.iter().try_fold(1u128, |acc, p| {
        acc.checked_mul(if p.ty == Type::Bool { 2 } else { width })
    });
    match size {
        Some(n) if n <= limit as u128 => {}
        _ => {
            return Err(Error::OracleRefused(format!(
                "{} inputs over [{min}, {max}] exceed the limit of {limit} executions",
                params.len()
            )))
        }
    }
    let mut suite: Vec<TestDatum> = vec![Vec::new()];
    for p in params {
        let values: Vec<Value> = if p.ty == Type::Bool {
            vec![Value::Bool(false), Value::Bool(true)]
        } else {
            (min..=max).map(Value::int).collect()
        };
        suite = suite
            .into_iter()
            .flat_map(|t| {
                values.iter().map(move |v| {
                    let mut t = t.clone();
                    t.push(v.clone());
                    t
                })
            })
            .collect();
    }
    Ok(suite)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub label: LabelId,
    pub status: &'static str,
    pub witness: TestDatum,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleVerdict {
    pub executions: usize,
    pub violations: Vec<Violation>,
}

impl OracleVerdict {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every verdict in `statuses` against exhaustive execution over
/// `min..=max`. Refuses domains needing more than `limit` executions.
pub fn oracle_check(
    ap: &AnnotatedProgram,
    statuses: &StatusMap,
    min: i64,
    max: i64,
    fuel: u64,
    limit: u64,
) -> Result<OracleVerdict> {
    let suite = exhaustive_suite(ap, min, max, limit)?;
    let vecs = measure(ap, &suite, fuel)?;
    let empty = Bits::new(suite.len());
    let row = |id: LabelId| vecs.rows.get(&id).unwrap_or(&empty);
    let mut violations = Vec::new();
    let mut fail = |label: LabelId, status: &Status, at: usize, detail: String| {
        violations.push(Violation {
            label,
            status: status.kind(),
            witness: suite[at].clone(),
            detail,
        });
    };
    for s in statuses.values() {
        let r = row(s.id);
        match &s.status {
            Status::Unknown => {}
            Status::Infeasible => {
                if let Some(k) = r.first_outside(&empty) {
                    fail(s.id, &s.status, k, format!("{} is covered", s.id));
                }
            }
            Status::DuplicateOf(o) => {
                let ro = row(*o);
                if let Some(k) = r.first_outside(ro).or_else(|| ro.first_outside(r)) {
                    fail(s.id, &s.status, k, format!("{} and {o} differ", s.id));
                }
            }
            Status::DuplicateOfPair(a, b) => {
                let u = row(*a).union(row(*b));
                if let Some(k) = r.first_outside(&u).or_else(|| u.first_outside(r)) {
                    fail(s.id, &s.status, k, format!("{} differs from {a} or {b}", s.id));
                }
            }
            Status::SubsumedBy(by) => {
                for b in by {
                    if let Some(k) = row(*b).first_outside(r) {
                        fail(s.id, &s.status, k, format!("{b} is covered but {} is not", s.id));
                    }
                }
            }
        }
    }
    Ok(OracleVerdict {
        executions: suite.len(),
        violations,
    })
}

/// Reads a JSON array of input vectors.
pub fn load_suite(path: &Path) -> Result<Vec<TestDatum>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}
