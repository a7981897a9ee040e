//! Label verdicts, subsumption-graph resolution and the `labels.status` file.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lang::ast::LabelId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Unknown,
    Infeasible,
    DuplicateOf(LabelId),
    DuplicateOfPair(LabelId, LabelId),
    /// Direct predecessors in the condensed subsumption graph, sorted.
    SubsumedBy(Vec<LabelId>),
}

impl Status {
    pub fn kind(&self) -> &'static str {
        match self {
            Status::Unknown => "unknown",
            Status::Infeasible => "infeasible",
            Status::DuplicateOf(_) => "duplicate",
            Status::DuplicateOfPair(..) => "duplicate_pair",
            Status::SubsumedBy(_) => "subsumed",
        }
    }

    pub fn is_duplicate(&self) -> bool {
        matches!(self, Status::DuplicateOf(_) | Status::DuplicateOfPair(..))
    }

    /// Labels this verdict refers to.
    pub fn targets(&self) -> Vec<LabelId> {
        match self {
            Status::DuplicateOf(a) => vec![*a],
            Status::DuplicateOfPair(a, b) => vec![*a, *b],
            Status::SubsumedBy(v) => v.clone(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelStatus {
    pub id: LabelId,
    pub status: Status,
    pub step: u8,
}

/// One line of `labels.status`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: u32,
    status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    of: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    of_pair: Option<[u32; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    by: Option<Vec<u32>>,
    step: u8,
}

impl From<&LabelStatus> for Record {
    fn from(s: &LabelStatus) -> Record {
        let mut r = Record {
            id: s.id.0,
            status: s.status.kind().to_string(),
            of: None,
            of_pair: None,
            by: None,
            step: s.step,
        };
        match &s.status {
            Status::DuplicateOf(a) => r.of = Some(a.0),
            Status::DuplicateOfPair(a, b) => r.of_pair = Some([a.0, b.0]),
            Status::SubsumedBy(v) => r.by = Some(v.iter().map(|l| l.0).collect()),
            _ => {}
        }
        r
    }
}

impl TryFrom<Record> for LabelStatus {
    type Error = String;

    fn try_from(r: Record) -> std::result::Result<LabelStatus, String> {
        if !(1..=3).contains(&r.step) {
            return Err(format!("step must be 1, 2 or 3, found {}", r.step));
        }
        let extra = |want: &str| -> std::result::Result<(), String> {
            let present = [
                ("of", r.of.is_some()),
                ("of_pair", r.of_pair.is_some()),
                ("by", r.by.is_some()),
            ];
            for (name, there) in present {
                if there && name != want {
                    return Err(format!("field `{name}` not allowed for status {}", r.status));
                }
            }
            Ok(())
        };
        let status = match r.status.as_str() {
            "unknown" => {
                extra("")?;
                Status::Unknown
            }
            "infeasible" => {
                extra("")?;
                Status::Infeasible
            }
            "duplicate" => {
                extra("of")?;
                Status::DuplicateOf(LabelId(r.of.ok_or("missing `of`")?))
            }
            "duplicate_pair" => {
                extra("of_pair")?;
                let [a, b] = r.of_pair.ok_or("missing `of_pair`")?;
                Status::DuplicateOfPair(LabelId(a), LabelId(b))
            }
            "subsumed" => {
                extra("by")?;
                let by = r.by.ok_or("missing `by`")?;
                if by.is_empty() {
                    return Err("`by` must not be empty".into());
                }
                Status::SubsumedBy(by.into_iter().map(LabelId).collect())
            }
            other => return Err(format!("unknown status `{other}`")),
        };
        let s = LabelStatus {
            id: LabelId(r.id),
            status,
            step: r.step,
        };
        if s.status.targets().contains(&s.id) {
            return Err(format!("label {} refers to itself", s.id));
        }
        Ok(s)
    }
}

/// Statuses keyed by label.
pub type StatusMap = BTreeMap<LabelId, LabelStatus>;

/// One JSON line per status, in label order.
pub fn to_text(statuses: &StatusMap) -> String {
    let mut text = String::new();
    for s in statuses.values() {
        text.push_str(&serde_json::to_string(&Record::from(s)).expect("records serialize"));
        text.push('\n');
    }
    text
}

/// Writes [`to_text`] through a temporary file renamed into place.
pub fn save(path: &Path, statuses: &StatusMap) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty());
    let tmp = match dir {
        Some(d) => d.join(format!(
            ".{}.tmp",
            path.file_name().and_then(|n| n.to_str()).unwrap_or("status")
        )),
        None => Path::new(&format!(".{}.tmp", path.display())).to_path_buf(),
    };
    let text = to_text(statuses);
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn parse(path: &Path, text: &str) -> Result<StatusMap> {
    let mut out = StatusMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| Error::StatusFormat {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let rec: Record = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        let s = LabelStatus::try_from(rec).map_err(bad)?;
        if out.contains_key(&s.id) {
            return Err(bad(format!("label {} listed twice", s.id)));
        }
        out.insert(s.id, s);
    }
    Ok(out)
}

pub fn load(path: &Path) -> Result<StatusMap> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(path, &text)
}

/// Resolves a proven subsumption graph: cycles collapse onto their least
/// label, and every condensed node with a predecessor is subsumed by the
/// representatives of its direct predecessors. Sources get no status.
pub fn resolve_group(nodes: &[LabelId], edges: &[(LabelId, LabelId)]) -> Vec<LabelStatus> {
    let index: HashMap<LabelId, usize> = nodes.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    let mut succ = vec![Vec::new(); nodes.len()];
    for (a, b) in edges {
        if a != b {
            succ[index[a]].push(index[b]);
        }
    }
    let comp = tarjan(&succ);
    let ncomp = comp.iter().copied().max().map_or(0, |m| m + 1);
    let mut rep = vec![LabelId(u32::MAX); ncomp];
    for (i, &c) in comp.iter().enumerate() {
        rep[c] = rep[c].min(nodes[i]);
    }
    let mut preds: Vec<BTreeSet<LabelId>> = vec![BTreeSet::new(); ncomp];
    for (i, out) in succ.iter().enumerate() {
        for &j in out {
            if comp[i] != comp[j] {
                preds[comp[j]].insert(rep[comp[i]]);
            }
        }
    }
    let mut out = Vec::new();
    for (i, &l) in nodes.iter().enumerate() {
        let c = comp[i];
        let status = if l != rep[c] {
            Status::DuplicateOf(rep[c])
        } else if !preds[c].is_empty() {
            Status::SubsumedBy(preds[c].iter().copied().collect())
        } else {
            continue;
        };
        out.push(LabelStatus {
            id: l,
            status,
            step: 3,
        });
    }
    out.sort_by_key(|s| s.id);
    out
}

/// Strongly connected components; returns the component index of each node.
fn tarjan(succ: &[Vec<usize>]) -> Vec<usize> {
    struct State<'a> {
        succ: &'a [Vec<usize>],
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        comp: Vec<usize>,
        next_index: usize,
        next_comp: usize,
    }
    fn connect(s: &mut State<'_>, v: usize) {
        s.index[v] = Some(s.next_index);
        s.low[v] = s.next_index;
        s.next_index += 1;
        s.stack.push(v);
        s.on_stack[v] = true;
        for k in 0..s.succ[v].len() {
            let w = s.succ[v][k];
            match s.index[w] {
                None => {
                    connect(s, w);
                    s.low[v] = s.low[v].min(s.low[w]);
                }
                Some(iw) if s.on_stack[w] => s.low[v] = s.low[v].min(iw),
                _ => {}
            }
        }
        if Some(s.low[v]) == s.index[v] {
            loop {
                let w = s.stack.pop().expect("non-empty stack");
                s.on_stack[w] = false;
                s.comp[w] = s.next_comp;
                if w == v {
                    break;
                }
            }
            s.next_comp += 1;
        }
    }
    let n = succ.len();
    let mut s = State {
        succ,
        index: vec![None; n],
        low: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        comp: vec![0; n],
        next_index: 0,
        next_comp: 0,
    };
    for v in 0..n {
        if s.index[v].is_none() {
            connect(&mut s, v);
        }
    }
    s.comp
}

/// Combines per-step verdicts. A label marked by two steps, a verdict that
/// points at an infeasible label, or a self-reference is an integrity error.
pub fn merge_steps(steps: &[&[LabelStatus]]) -> Result<StatusMap> {
    let mut out = StatusMap::new();
    for s in steps.iter().flat_map(|s| s.iter()) {
        if s.status == Status::Unknown {
            continue;
        }
        if let Some(prev) = out.get(&s.id) {
            return Err(Error::Integrity(format!(
                "label {} marked {} at step {} and {} at step {}",
                s.id,
                prev.status.kind(),
                prev.step,
                s.status.kind(),
                s.step
            )));
        }
        out.insert(s.id, s.clone());
    }
    check_integrity(&out)?;
    Ok(out)
}

pub fn check_integrity(statuses: &StatusMap) -> Result<()> {
    for s in statuses.values() {
        for t in s.status.targets() {
            if t == s.id {
                return Err(Error::Integrity(format!("label {} refers to itself", s.id)));
            }
            if matches!(statuses.get(&t), Some(ts) if ts.status == Status::Infeasible) {
                return Err(Error::Integrity(format!(
                    "label {} is {} with respect to infeasible label {t}",
                    s.id,
                    s.status.kind()
                )));
            }
        }
    }
    Ok(())
}

/// Fills in `unknown` for every label without a verdict.
pub fn complete(statuses: &StatusMap, labels: impl IntoIterator<Item = LabelId>, step: u8) -> StatusMap {
    let mut out = statuses.clone();
    for id in labels {
        out.entry(id).or_insert(LabelStatus {
            id,
            status: Status::Unknown,
            step,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(v: &[u32]) -> Vec<LabelId> {
        v.iter().map(|&x| LabelId(x)).collect()
    }

    fn e(a: u32, b: u32) -> (LabelId, LabelId) {
        (LabelId(a), LabelId(b))
    }

    #[test]
    fn cycle_becomes_duplicate() {
        let r = resolve_group(&l(&[3, 7]), &[e(3, 7), e(7, 3)]);
        assert_eq!(
            r,
            vec![LabelStatus {
                id: LabelId(7),
                status: Status::DuplicateOf(LabelId(3)),
                step: 3
            }]
        );
    }

    #[test]
    fn single_edge_subsumes() {
        let r = resolve_group(&l(&[1, 5]), &[e(1, 5)]);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].id, LabelId(5));
        assert_eq!(r[0].status, Status::SubsumedBy(l(&[1])));
        assert!(resolve_group(&l(&[1, 2, 3]), &[]).is_empty());
    }

    #[test]
    fn direct_predecessors_only() {
        // 1 -> 3 -> 5, 1 -> 5: 5 lists both of its direct predecessors.
        let r = resolve_group(&l(&[1, 3, 5]), &[e(1, 3), e(3, 5), e(1, 5)]);
        let by: Vec<_> = r.iter().map(|s| (s.id.0, s.status.clone())).collect();
        assert_eq!(
            by,
            vec![
                (3, Status::SubsumedBy(l(&[1]))),
                (5, Status::SubsumedBy(l(&[1, 3])))
            ]
        );
    }

    #[test]
    fn resolve_is_idempotent_on_representatives() {
        let nodes = l(&[1, 2, 3, 4]);
        let edges = [e(2, 1), e(1, 2), e(3, 1), e(4, 3), e(3, 4)];
        let first = resolve_group(&nodes, &edges);
        assert_eq!(first, resolve_group(&nodes, &edges));
        let reps: Vec<u32> = first
            .iter()
            .filter_map(|s| match s.status {
                Status::DuplicateOf(r) => Some(r.0),
                _ => None,
            })
            .collect();
        assert_eq!(reps, vec![1, 3]);
        assert_eq!(first[0].status, Status::SubsumedBy(l(&[3])));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.status");
        let mut m = StatusMap::new();
        for s in [
            LabelStatus { id: LabelId(1), status: Status::Unknown, step: 3 },
            LabelStatus { id: LabelId(2), status: Status::SubsumedBy(l(&[4, 6])), step: 3 },
            LabelStatus { id: LabelId(7), status: Status::DuplicateOf(LabelId(3)), step: 3 },
            LabelStatus { id: LabelId(8), status: Status::DuplicateOfPair(LabelId(3), LabelId(4)), step: 2 },
            LabelStatus { id: LabelId(9), status: Status::Infeasible, step: 1 },
        ] {
            m.insert(s.id, s);
        }
        save(&path, &m).unwrap();
        assert_eq!(load(&path).unwrap(), m);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains(r#"{"id":9,"status":"infeasible","step":1}"#));
        assert!(text.contains(r#"{"id":8,"status":"duplicate_pair","of_pair":[3,4],"step":2}"#));
    }

    #[test]
    fn malformed_and_duplicate_lines_are_errors() {
        let p = Path::new("x.status");
        let ok = parse(p, r#"{"id":9,"status":"infeasible","step":1}"#).unwrap();
        assert_eq!(ok[&LabelId(9)].status, Status::Infeasible);
        let err = parse(p, "{\"id\":1,\"status\":\"unknown\",\"step\":1}\n{oops").unwrap_err();
        assert!(matches!(err, Error::StatusFormat { line: 2, .. }), "{err}");
        let dup = "{\"id\":1,\"status\":\"unknown\",\"step\":1}\n{\"id\":1,\"status\":\"infeasible\",\"step\":1}";
        assert!(matches!(parse(p, dup).unwrap_err(), Error::StatusFormat { line: 2, .. }));
        assert!(parse(p, r#"{"id":1,"status":"duplicate","of":1,"step":2}"#).is_err());
        assert!(parse(p, r#"{"id":1,"status":"subsumed","by":[],"step":3}"#).is_err());
    }

    #[test]
    fn merge_rejects_conflicts_and_degenerate_targets() {
        let inf = LabelStatus { id: LabelId(9), status: Status::Infeasible, step: 1 };
        let dup = LabelStatus { id: LabelId(9), status: Status::DuplicateOf(LabelId(1)), step: 2 };
        assert!(merge_steps(&[&[inf.clone()], &[dup]]).is_err());
        let sub = LabelStatus { id: LabelId(2), status: Status::SubsumedBy(l(&[9])), step: 3 };
        assert!(merge_steps(&[&[inf.clone()], &[], &[sub]]).is_err());
        assert_eq!(merge_steps(&[&[], &[], &[]]).unwrap(), StatusMap::new());
    }
}
