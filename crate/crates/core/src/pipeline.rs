//! The full detection process and its artifacts.
//!
//! Output directory layout:
//!
//! | file            | content                                        |
//! |-----------------|------------------------------------------------|
//! | `program.lwl`   | the annotated program                          |
//! | `labels.json`   | label records                                  |
//! | `groups.json`   | co-reached groups                              |
//! | `labels.status` | one verdict per label (JSON lines)             |
//! | `run.json`      | per-step figures of the last run               |
//! | `report.txt`    | human-readable summary                         |
//! | `proofs/`       | one script per condition, verdicts, transcripts |

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::annotate::{annotate, labels_from_json, labels_to_json, AnnotatedProgram, Criterion};
use crate::blocks::{detect_blocks, CoReachedGroup};
use crate::error::{Error, Result};
use crate::lang::ast::LabelId;
use crate::lang::parse_annotated;
use crate::prove::{prove_all, ProofResult, ProverConfig, Verdict};
use crate::status::{self, resolve_group, LabelStatus, Status, StatusMap};
use crate::vcgen::{self, Purpose, VerificationCondition};

pub const PROGRAM_FILE: &str = "program.lwl";
pub const LABELS_FILE: &str = "labels.json";
pub const GROUPS_FILE: &str = "groups.json";
pub const STATUS_FILE: &str = "labels.status";
pub const RUN_FILE: &str = "run.json";
pub const REPORT_FILE: &str = "report.txt";
pub const PROOFS_DIR: &str = "proofs";

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub input: PathBuf,
    /// Labels to add; existing pragmas in the input are kept.
    pub criterion: Option<Criterion>,
    pub steps: BTreeSet<u8>,
    pub prover: ProverConfig,
    pub outdir: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub step: u8,
    pub vcs: usize,
    pub proven: usize,
    pub not_proven: usize,
    pub unknown: usize,
    pub timeout: usize,
    pub solver_error: usize,
    pub marked: usize,
    pub seconds: f64,
}

/// What `run.json` records.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub input: String,
    pub steps: Vec<StepSummary>,
    /// Steps whose verdicts are in `labels.status`, including earlier runs.
    pub executed: BTreeSet<u8>,
    /// Step 3 ran without infeasibility verdicts, so some subsumptions may be degenerate.
    pub degenerate_risk: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub labels: usize,
    pub infeasible: usize,
    pub duplicate: usize,
    pub subsumed: usize,
    pub unknown: usize,
}

impl Counts {
    pub fn marked(&self) -> usize {
        self.infeasible + self.duplicate + self.subsumed
    }

    fn add(&mut self, s: &Status) {
        self.labels += 1;
        match s {
            Status::Unknown => self.unknown += 1,
            Status::Infeasible => self.infeasible += 1,
            Status::DuplicateOf(_) | Status::DuplicateOfPair(..) => self.duplicate += 1,
            Status::SubsumedBy(_) => self.subsumed += 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub total: Counts,
    pub by_criterion: BTreeMap<String, Counts>,
    pub steps: Vec<StepSummary>,
    pub degenerate_risk: bool,
}

fn pct(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        100.0 * n as f64 / d as f64
    }
}

impl Report {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10} {:>7} {:>16} {:>16} {:>16} {:>16}",
            "criterion", "labels", "infeasible", "duplicate", "subsumed", "marked"
        );
        let row = |out: &mut String, name: &str, c: &Counts| {
            let cell = |n: usize| format!("{n} ({:.1}%)", pct(n, c.labels));
            let _ = writeln!(
                out,
                "{:<10} {:>7} {:>16} {:>16} {:>16} {:>16}",
                name,
                c.labels,
                cell(c.infeasible),
                cell(c.duplicate),
                cell(c.subsumed),
                cell(c.marked())
            );
        };
        for (name, c) in &self.by_criterion {
            row(&mut out, name, c);
        }
        row(&mut out, "total", &self.total);
        if !self.steps.is_empty() {
            out.push('\n');
            let _ = writeln!(
                out,
                "{:<5} {:>6} {:>7} {:>11} {:>8} {:>8} {:>7} {:>7} {:>9}",
                "step", "vcs", "proven", "not_proven", "unknown", "timeout", "errors", "marked", "seconds"
            );
            for s in &self.steps {
                let _ = writeln!(
                    out,
                    "{:<5} {:>6} {:>7} {:>11} {:>8} {:>8} {:>7} {:>7} {:>9.3}",
                    s.step, s.vcs, s.proven, s.not_proven, s.unknown, s.timeout, s.solver_error, s.marked, s.seconds
                );
            }
        }
        if self.degenerate_risk {
            out.push_str("\nwarning: step 3 ran without step 1 verdicts; subsumptions may be degenerate\n");
        }
        out
    }
}

/// Everything a run produces, in memory.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub annotated: AnnotatedProgram,
    pub groups: Vec<CoReachedGroup>,
    pub statuses: StatusMap,
    pub record: RunRecord,
    pub report: Report,
    pub proofs: Vec<ProofResult>,
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Reads the input and adds the labels of `criterion`.
pub fn load_input(path: &Path, criterion: Option<Criterion>) -> Result<AnnotatedProgram> {
    let ap = parse_annotated(&read(path)?)?;
    Ok(match criterion {
        Some(c) => annotate(&ap, c),
        None => ap,
    })
}

/// Runs the requested steps, reusing verdicts of earlier steps found in the
/// output directory when it holds the same annotated program.
pub fn run(cfg: &PipelineConfig) -> Result<RunOutcome> {
    if cfg.steps.is_empty() || cfg.steps.iter().any(|s| !(1..=3).contains(s)) {
        return Err(Error::Config(format!("steps must be a non-empty subset of 1,2,3, got {:?}", cfg.steps)));
    }
    let ap = load_input(&cfg.input, cfg.criterion)?;
    let out = &cfg.outdir;
    std::fs::create_dir_all(out.join(PROOFS_DIR)).map_err(|e| Error::io(out, e))?;
    let source = ap.to_source();
    let status_path = out.join(STATUS_FILE);
    let same_program = read(&out.join(PROGRAM_FILE)).is_ok_and(|old| old == source);
    let first = *cfg.steps.iter().next().expect("non-empty");
    let mut statuses = StatusMap::new();
    let mut executed: BTreeSet<u8> = BTreeSet::new();
    if same_program && status_path.exists() {
        if let Ok(text) = read(&out.join(RUN_FILE)) {
            if let Ok(prev) = serde_json::from_str::<RunRecord>(&text) {
                executed.extend(prev.executed.into_iter().filter(|&s| s < first));
            }
        }
        for (id, s) in status::load(&status_path)? {
            if ap.label(id).is_none() {
                return Err(Error::Integrity(format!("{} refers to unknown label {id}", status_path.display())));
            }
            if s.step < first {
                if s.status != Status::Unknown {
                    statuses.insert(id, s);
                }
            }
        }
    }
    write(&out.join(PROGRAM_FILE), &source)?;
    write(&out.join(LABELS_FILE), &labels_to_json(&ap.labels))?;
    let groups = detect_blocks(&ap);
    write(
        &out.join(GROUPS_FILE),
        &serde_json::to_string_pretty(&groups).expect("groups serialize"),
    )?;

    let transcripts = cfg
        .prover
        .transcript_dir
        .clone()
        .unwrap_or_else(|| out.join(PROOFS_DIR).join("transcripts"));
    let mut prover = cfg.prover.clone();
    executed.extend(cfg.steps.iter().copied());
    let degenerate_risk = cfg.steps.contains(&3) && !executed.contains(&1);
    if degenerate_risk {
        log::warn!("step 3 without step 1 verdicts: subsumptions may be degenerate");
    }
    let mut record = RunRecord {
        input: cfg.input.display().to_string(),
        steps: Vec::new(),
        executed,
        degenerate_risk,
    };
    let mut proofs = Vec::new();
    for &step in &cfg.steps {
        let start = Instant::now();
        prover.transcript_dir = Some(transcripts.join(format!("step{step}")));
        let mut marks: Vec<LabelStatus> = Vec::new();
        let (vcs, results) = match step {
            1 => {
                let vcs = vcgen::wp(&ap, &groups, &vcgen::gen_step1(&ap));
                let results = prove_all(&vcs, &prover)?;
                for (vc, r) in vcs.iter().zip(&results) {
                    if let (Purpose::Infeasible { label }, Verdict::Proven) = (vc.purpose, r.verdict) {
                        marks.push(LabelStatus { id: label, status: Status::Infeasible, step: 1 });
                    }
                }
                (vcs, results)
            }
            2 => {
                marks = vcgen::pair_duplicates(&ap, &statuses);
                let mut known = statuses.clone();
                known.extend(marks.iter().map(|s| (s.id, s.clone())));
                let vcs = vcgen::wp(&ap, &groups, &vcgen::gen_step2(&ap, &known));
                let results = prove_all(&vcs, &prover)?;
                let proven: BTreeSet<LabelId> = vcs
                    .iter()
                    .zip(&results)
                    .filter_map(|(vc, r)| match (vc.purpose, r.verdict) {
                        (Purpose::AlwaysTrue { label }, Verdict::Proven) => Some(label),
                        _ => None,
                    })
                    .collect();
                for g in &groups {
                    let always: Vec<LabelId> = g.labels.iter().copied().filter(|l| proven.contains(l)).collect();
                    if let Some(&rep) = always.iter().min() {
                        for &l in always.iter().filter(|&&l| l != rep) {
                            marks.push(LabelStatus { id: l, status: Status::DuplicateOf(rep), step: 2 });
                        }
                    }
                }
                (vcs, results)
            }
            _ => {
                let plans = vcgen::gen_step3(&groups, &statuses);
                let asserts: Vec<_> = plans.iter().flat_map(|(_, a)| a.iter().cloned()).collect();
                let vcs = vcgen::wp(&ap, &groups, &asserts);
                let results = prove_all(&vcs, &prover)?;
                let mut edges: BTreeMap<u32, Vec<(LabelId, LabelId)>> = BTreeMap::new();
                for (vc, r) in vcs.iter().zip(&results) {
                    if let (Purpose::Implies { group, from, to }, Verdict::Proven) = (vc.purpose, r.verdict) {
                        edges.entry(group).or_default().push((from, to));
                    }
                }
                for (plan, _) in &plans {
                    let e = edges.remove(&plan.group_id).unwrap_or_default();
                    marks.extend(resolve_group(&plan.survivors, &e));
                }
                (vcs, results)
            }
        };
        write_proofs(out, step, &vcs, &results)?;
        let mut summary = StepSummary {
            step,
            vcs: vcs.len(),
            marked: marks.len(),
            ..StepSummary::default()
        };
        for r in &results {
            match r.verdict {
                Verdict::Proven => summary.proven += 1,
                Verdict::NotProven => summary.not_proven += 1,
                Verdict::Unknown => summary.unknown += 1,
                Verdict::Timeout => summary.timeout += 1,
                Verdict::SolverError => summary.solver_error += 1,
            }
        }
        let previous: Vec<LabelStatus> = statuses.values().cloned().collect();
        statuses = status::merge_steps(&[&previous, &marks])?;
        summary.seconds = start.elapsed().as_secs_f64();
        log::info!(
            "step {step}: {} conditions, {} proven, {} labels marked in {:.2}s",
            summary.vcs,
            summary.proven,
            summary.marked,
            summary.seconds
        );
        record.steps.push(summary);
        proofs.extend(results);
    }
    let highest = record.executed.iter().copied().max().unwrap_or(first);
    let complete = status::complete(&statuses, ap.labels.iter().map(|l| l.id), highest);
    status::save(&status_path, &complete)?;
    write(
        &out.join(RUN_FILE),
        &serde_json::to_string_pretty(&record).expect("run record serializes"),
    )?;
    let report = build_report(&ap.labels, &complete, &record);
    write(&out.join(REPORT_FILE), &report.to_text())?;
    Ok(RunOutcome {
        annotated: ap,
        groups,
        statuses: complete,
        record,
        report,
        proofs,
    })
}

fn write_proofs(out: &Path, step: u8, vcs: &[VerificationCondition], results: &[ProofResult]) -> Result<()> {
    let dir = out.join(PROOFS_DIR);
    for vc in vcs {
        write(&dir.join(vc.file_name()), &vc.smtlib())?;
    }
    let mut lines = String::new();
    for r in results {
        lines.push_str(&serde_json::to_string(r).expect("results serialize"));
        lines.push('\n');
    }
    write(&dir.join(format!("step{step}.jsonl")), &lines)
}

fn build_report(labels: &[crate::annotate::Label], statuses: &StatusMap, record: &RunRecord) -> Report {
    let mut report = Report {
        steps: record.steps.clone(),
        degenerate_risk: record.degenerate_risk,
        ..Report::default()
    };
    let criterion: BTreeMap<LabelId, String> = labels.iter().map(|l| (l.id, l.criterion.to_string())).collect();
    for s in statuses.values() {
        report.total.add(&s.status);
        let name = criterion.get(&s.id).cloned().unwrap_or_else(|| "?".to_string());
        report.by_criterion.entry(name).or_default().add(&s.status);
    }
    report
}

/// Rebuilds the report from the artifacts of a previous run.
pub fn report(outdir: &Path) -> Result<Report> {
    let statuses = status::load(&outdir.join(STATUS_FILE))?;
    let labels = match read(&outdir.join(LABELS_FILE)) {
        Ok(text) => labels_from_json(&text).map_err(|m| Error::Input(format!("{}: {m}", LABELS_FILE)))?,
        Err(_) => Vec::new(),
    };
    let record = match read(&outdir.join(RUN_FILE)) {
        Ok(text) => serde_json::from_str(&text).map_err(|e| Error::json(outdir.join(RUN_FILE), e))?,
        Err(_) => RunRecord::default(),
    };
    Ok(build_report(&labels, &statuses, &record))
}
