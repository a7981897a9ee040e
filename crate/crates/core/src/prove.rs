//! Parallel discharge of verification conditions.
//!
//! Each worker owns at most one solver process. A session is an SMT-LIB file
//! holding one or more goals, each wrapped in `push`/`pop` and followed by an
//! `echo` marker, so verdicts can be attributed while the solver is still
//! running. A goal that runs past the time limit, or a solver whose resident
//! memory passes the cap, is killed; the goal is reported as `timeout` and
//! the remaining goals of the session continue in a fresh process.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt::Write;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lang::value::Value;
use crate::logic::{smt_symbol, smt_term, Sort};
use crate::vcgen::VerificationCondition;

/// Solver used when neither a command nor `LCLEAN_SOLVER` is given.
pub const DEFAULT_SOLVER_COMMAND: &str = "z3 {file}";
pub const SOLVER_ENV: &str = "LCLEAN_SOLVER";

/// Largest number of assignments the stub solver will try per goal.
pub const STUB_ENUMERATION_LIMIT: u64 = 2_000_000;

const MARKER: &str = "@lclean-goal";
const POLL: Duration = Duration::from_millis(20);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Proven,
    NotProven,
    Unknown,
    Timeout,
    SolverError,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Proven => "proven",
            Verdict::NotProven => "not_proven",
            Verdict::Unknown => "unknown",
            Verdict::Timeout => "timeout",
            Verdict::SolverError => "solver_error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProofResult {
    pub vc_id: String,
    pub verdict: Verdict,
    /// Seconds.
    pub wall_time: f64,
    pub solver_output: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolverBackend {
    /// Argument template; `{file}` is replaced by the path of the SMT-LIB script.
    Command(String),
    /// Enumerates integer variables over `min..=max`. Answers `unsat` only
    /// when `exhaustive` declares that range to cover every relevant value.
    Stub { min: i64, max: i64, exhaustive: bool },
}

impl SolverBackend {
    /// `LCLEAN_SOLVER` if set, else [`DEFAULT_SOLVER_COMMAND`].
    pub fn from_env() -> SolverBackend {
        SolverBackend::Command(
            std::env::var(SOLVER_ENV).unwrap_or_else(|_| DEFAULT_SOLVER_COMMAND.to_string()),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProverConfig {
    pub backend: SolverBackend,
    pub jobs: usize,
    pub timeout: Duration,
    pub memory_mb: u64,
    pub batch: bool,
    /// Where to keep each session's script and transcript.
    pub transcript_dir: Option<PathBuf>,
}

impl ProverConfig {
    pub fn new(backend: SolverBackend) -> ProverConfig {
        ProverConfig {
            backend,
            jobs: std::thread::available_parallelism().map_or(1, |n| n.get()),
            timeout: Duration::from_secs(10),
            memory_mb: 1024,
            batch: false,
            transcript_dir: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        if self.timeout.is_zero() {
            return Err(Error::Config("timeout must be positive".into()));
        }
        match &self.backend {
            SolverBackend::Command(template) => {
                command_argv(template, Path::new("x")).map(|_| ())?;
                let argv = shlex::split(template).unwrap_or_default();
                let program = &argv[0];
                if find_executable(program).is_none() {
                    return Err(Error::Config(format!("solver `{program}` not found")));
                }
                Ok(())
            }
            SolverBackend::Stub { min, max, .. } if min > max => {
                Err(Error::Config(format!("empty stub domain {min}..={max}")))
            }
            SolverBackend::Stub { .. } => Ok(()),
        }
    }
}

fn command_argv(template: &str, file: &Path) -> Result<Vec<String>> {
    let argv = shlex::split(template)
        .filter(|a| !a.is_empty())
        .ok_or_else(|| Error::Config(format!("cannot parse solver command `{template}`")))?;
    if !argv.iter().any(|a| a.contains("{file}")) {
        return Err(Error::Config(format!(
            "solver command `{template}` has no {{file}} placeholder"
        )));
    }
    let f = file.to_string_lossy();
    Ok(argv.into_iter().map(|a| a.replace("{file}", &f)).collect())
}

fn find_executable(program: &str) -> Option<PathBuf> {
    let is_exec = |p: &Path| {
        use std::os::unix::fs::PermissionsExt;
        p.metadata()
            .map(|m| m.is_file() && m.permissions().mode() & 0o111 != 0)
            .unwrap_or(false)
    };
    if program.contains('/') {
        let p = PathBuf::from(program);
        return is_exec(&p).then_some(p);
    }
    std::env::var_os("PATH").and_then(|paths| {
        std::env::split_paths(&paths)
            .map(|d| d.join(program))
            .find(|p| is_exec(p))
    })
}

/// Indices of `vcs` grouped by function, in order of first appearance.
pub fn batch_by_function(vcs: &[VerificationCondition]) -> Vec<Vec<usize>> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, vc) in vcs.iter().enumerate() {
        groups
            .entry(vc.function.as_str())
            .or_insert_with(|| {
                order.push(vc.function.as_str());
                Vec::new()
            })
            .push(i);
    }
    order.into_iter().map(|f| groups.remove(f).unwrap()).collect()
}

/// One result per condition, in input order.
pub fn prove_all(vcs: &[VerificationCondition], config: &ProverConfig) -> Result<Vec<ProofResult>> {
    config.validate()?;
    if let Some(dir) = &config.transcript_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let sessions: Vec<Vec<usize>> = if config.batch {
        batch_by_function(vcs)
    } else {
        (0..vcs.len()).map(|i| vec![i]).collect()
    };
    let results: Mutex<Vec<Option<ProofResult>>> = Mutex::new(vec![None; vcs.len()]);
    let next = AtomicUsize::new(0);
    let workers = config.jobs.min(sessions.len()).max(1);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(session) = sessions.get(k) else { break };
                let done = match &config.backend {
                    SolverBackend::Command(template) => run_session(template, vcs, session, config, k),
                    SolverBackend::Stub { min, max, exhaustive } => session
                        .iter()
                        .map(|&i| (i, stub_prove(&vcs[i], *min, *max, *exhaustive, config.timeout)))
                        .collect(),
                };
                let mut r = results.lock().expect("result lock");
                for (i, res) in done {
                    r[i] = Some(res);
                }
            });
        }
    });
    Ok(results
        .into_inner()
        .expect("result lock")
        .into_iter()
        .zip(vcs)
        .map(|(r, vc)| {
            r.unwrap_or_else(|| ProofResult {
                vc_id: vc.id.clone(),
                verdict: Verdict::SolverError,
                wall_time: 0.0,
                solver_output: "worker lost".into(),
            })
        })
        .collect())
}

/// SMT-LIB text for a session over `goals`: shared declarations, then each
/// goal in its own `push`/`pop` scope followed by a marker line.
pub fn session_script(vcs: &[VerificationCondition], goals: &[usize]) -> String {
    let nonlinear = goals.iter().any(|&i| vcs[i].logic() == "QF_NIA");
    let mut out = format!("(set-logic {})\n", if nonlinear { "ALL" } else { "QF_LIA" });
    let mut vars: BTreeMap<String, Sort> = BTreeMap::new();
    for &i in goals {
        vars.extend(vcs[i].store.vars(&[vcs[i].goal]));
    }
    for (name, sort) in &vars {
        let sort = if *sort == Sort::Int { "Int" } else { "Bool" };
        let _ = writeln!(out, "(declare-const {} {sort})", smt_symbol(name));
    }
    for (k, &i) in goals.iter().enumerate() {
        let vc = &vcs[i];
        let (defs, body) = smt_term(&vc.store, vc.goal, &format!("g{k}!"));
        out.push_str("(push 1)\n");
        for d in defs {
            out.push_str(&d);
            out.push('\n');
        }
        let _ = writeln!(out, "(assert (not {body}))\n(check-sat)\n(echo \"{MARKER} {k}\")\n(pop 1)");
    }
    out
}

struct Outcome {
    verdict: Verdict,
    output: String,
    elapsed: Duration,
}

fn verdict_of(lines: &[String]) -> Verdict {
    if lines.iter().any(|l| l.starts_with("(error")) {
        return Verdict::SolverError;
    }
    match lines.iter().rev().find(|l| matches!(l.as_str(), "sat" | "unsat" | "unknown")) {
        Some(l) if l == "unsat" => Verdict::Proven,
        Some(l) if l == "sat" => Verdict::NotProven,
        Some(_) => Verdict::Unknown,
        None => Verdict::SolverError,
    }
}

fn rss_kb(pid: u32) -> Option<u64> {
    let text = std::fs::read_to_string(format!("/proc/{pid}/status")).ok()?;
    let line = text.lines().find(|l| l.starts_with("VmRSS:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

fn kill(child: &mut Child) {
    let _ = child.kill();
    let _ = child.wait();
}

/// Runs the goals of one session, restarting the solver after a timeout or crash.
fn run_session(
    template: &str,
    vcs: &[VerificationCondition],
    session: &[usize],
    config: &ProverConfig,
    session_no: usize,
) -> Vec<(usize, ProofResult)> {
    let mut pending: VecDeque<usize> = session.iter().copied().collect();
    let mut out = Vec::new();
    let mut attempt = 0;
    while !pending.is_empty() {
        let goals: Vec<usize> = pending.iter().copied().collect();
        let outcomes = run_process(template, vcs, &goals, config, session_no, attempt);
        attempt += 1;
        let stopped = outcomes.len() < goals.len();
        for (k, o) in outcomes.into_iter().enumerate() {
            let i = goals[k];
            pending.pop_front();
            out.push((
                i,
                ProofResult {
                    vc_id: vcs[i].id.clone(),
                    verdict: o.verdict,
                    wall_time: o.elapsed.as_secs_f64(),
                    solver_output: o.output,
                },
            ));
        }
        if !stopped {
            break;
        }
    }
    out
}

/// Starts one solver process over `goals`. Returns outcomes for a prefix of
/// `goals`; the last one explains why the process stopped early, if it did.
fn run_process(
    template: &str,
    vcs: &[VerificationCondition],
    goals: &[usize],
    config: &ProverConfig,
    session_no: usize,
    attempt: usize,
) -> Vec<Outcome> {
    let script = session_script(vcs, goals);
    let fail_all = |msg: String| {
        vec![Outcome {
            verdict: Verdict::SolverError,
            output: msg,
            elapsed: Duration::ZERO,
        }]
    };
    let (file, _guard) = match &config.transcript_dir {
        Some(dir) => {
            let name = if goals.len() == 1 {
                vcs[goals[0]].file_name()
            } else {
                format!("session_{session_no}_{attempt}_{}.smt2", vcs[goals[0]].function)
            };
            (dir.join(name), None)
        }
        None => match tempfile::Builder::new().prefix("lclean").suffix(".smt2").tempfile() {
            Ok(f) => (f.path().to_path_buf(), Some(f)),
            Err(e) => return fail_all(format!("cannot create script file: {e}")),
        },
    };
    if let Err(e) = std::fs::write(&file, &script) {
        return fail_all(format!("cannot write {}: {e}", file.display()));
    }
    let argv = match command_argv(template, &file) {
        Ok(a) => a,
        Err(e) => return fail_all(e.to_string()),
    };
    let mut child = match Command::new(&argv[0])
        .args(&argv[1..])
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
    {
        Ok(c) => c,
        Err(e) => return fail_all(format!("cannot start {}: {e}", argv[0])),
    };
    let stdout = child.stdout.take().expect("piped stdout");
    let (tx, rx) = mpsc::channel::<String>();
    let reader = std::thread::spawn(move || {
        for line in BufReader::new(stdout).lines() {
            let Ok(line) = line else { break };
            if tx.send(line).is_err() {
                break;
            }
        }
    });
    let mut outcomes = Vec::new();
    let mut lines: Vec<String> = Vec::new();
    let mut transcript = String::new();
    let mut started = Instant::now();
    let limit_kb = config.memory_mb.saturating_mul(1024);
    let mut last_mem_check = Instant::now();
    while outcomes.len() < goals.len() {
        match rx.recv_timeout(POLL) {
            Ok(line) => {
                let line = line.trim().to_string();
                transcript.push_str(&line);
                transcript.push('\n');
                if line.starts_with(MARKER) {
                    outcomes.push(Outcome {
                        verdict: verdict_of(&lines),
                        output: lines.join("\n"),
                        elapsed: started.elapsed(),
                    });
                    lines.clear();
                    started = Instant::now();
                } else {
                    lines.push(line);
                }
            }
            Err(RecvTimeoutError::Timeout) => {
                if started.elapsed() > config.timeout {
                    kill(&mut child);
                    outcomes.push(Outcome {
                        verdict: Verdict::Timeout,
                        output: format!("killed after {:?}", config.timeout),
                        elapsed: started.elapsed(),
                    });
                    break;
                }
                if last_mem_check.elapsed() >= Duration::from_millis(100) {
                    last_mem_check = Instant::now();
                    if rss_kb(child.id()).is_some_and(|kb| kb > limit_kb) {
                        kill(&mut child);
                        outcomes.push(Outcome {
                            verdict: Verdict::Timeout,
                            output: format!("killed above {} MB resident memory", config.memory_mb),
                            elapsed: started.elapsed(),
                        });
                        break;
                    }
                }
            }
            Err(RecvTimeoutError::Disconnected) => {
                let status = child.wait().map(|s| s.to_string()).unwrap_or_default();
                lines.push(format!("solver stopped early ({status})"));
                outcomes.push(Outcome {
                    verdict: Verdict::SolverError,
                    output: lines.join("\n"),
                    elapsed: started.elapsed(),
                });
                break;
            }
        }
    }
    if outcomes.len() == goals.len() {
        // All verdicts are in; the solver only has to exit.
        let deadline = Instant::now() + Duration::from_secs(1);
        loop {
            match child.try_wait() {
                Ok(Some(_)) => break,
                Ok(None) if Instant::now() < deadline => std::thread::sleep(Duration::from_millis(5)),
                _ => {
                    kill(&mut child);
                    break;
                }
            }
        }
    } else {
        kill(&mut child);
    }
    let _ = reader.join();
    if config.transcript_dir.is_some() {
        let _ = std::fs::write(file.with_extension("out"), &transcript);
    }
    log::debug!("session {session_no}.{attempt}: {} of {} goals", outcomes.len(), goals.len());
    outcomes
}

/// Bounded enumeration over the free variables of the goal.
pub fn stub_prove(vc: &VerificationCondition, min: i64, max: i64, exhaustive: bool, timeout: Duration) -> ProofResult {
    let start = Instant::now();
    let vars = vc.store.vars(&[vc.goal]);
    let width = (max as i128 - min as i128 + 1) as u128;
    let total = vars.iter().try_fold(1u128, |acc, (_, s)| {
        acc.checked_mul(if *s == Sort::Int { width } else { 2 })
    });
    let complete = total.is_some_and(|t| t <= STUB_ENUMERATION_LIMIT as u128);
    let mut env: HashMap<&str, Value> = HashMap::new();
    let mut undetermined = false;
    let mut counterexample: Option<String> = None;
    let mut tried: u64 = 0;
    let mut cut = false;
    let mut digits = vec![0u128; vars.len()];
    'outer: loop {
        for (d, (name, sort)) in digits.iter().zip(&vars) {
            let v = match sort {
                Sort::Int => Value::int(min + *d as i64),
                Sort::Bool => Value::Bool(*d == 1),
            };
            env.insert(name.as_str(), v);
        }
        match vc.store.eval(vc.goal, &env) {
            Some(Value::Bool(true)) => {}
            Some(_) => {
                let mut parts: Vec<String> = vars.iter().map(|(n, _)| format!("{n}={}", env[n.as_str()])).collect();
                parts.sort();
                counterexample = Some(parts.join(" "));
                break;
            }
            None => undetermined = true,
        }
        tried += 1;
        if tried >= STUB_ENUMERATION_LIMIT || (tried % 4096 == 0 && start.elapsed() > timeout) {
            cut = true;
            break;
        }
        for (d, (_, sort)) in digits.iter_mut().zip(&vars) {
            *d += 1;
            let base = if *sort == Sort::Int { width } else { 2 };
            if *d < base {
                continue 'outer;
            }
            *d = 0;
        }
        break;
    }
    let (verdict, output) = match counterexample {
        Some(cex) => (Verdict::NotProven, format!("sat\n{cex}")),
        None if exhaustive && complete && !cut && !undetermined => (Verdict::Proven, "unsat".to_string()),
        None if cut && start.elapsed() > timeout => (Verdict::Timeout, format!("stopped after {tried} assignments")),
        None => (Verdict::Unknown, format!("unknown\nno counterexample in {tried} assignments")),
    };
    ProofResult {
        vc_id: vc.id.clone(),
        verdict,
        wall_time: start.elapsed().as_secs_f64(),
        solver_output: output,
    }
}
