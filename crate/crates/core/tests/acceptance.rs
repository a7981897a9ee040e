//! Acceptance checks, one line per criterion. Runs as a plain binary
//! (`harness = false`) so each criterion reports pass or fail on its own.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use lclean_core::annotate::{annotate, insert_labels, Criterion, Label, Placement};
use lclean_core::blocks::{detect_blocks, pair_counts};
use lclean_core::coverage::{adjust, dynamic_detect, exhaustive_suite, measure, oracle_check, Bits, CoverageVector};
use lclean_core::gen::{expr_source, generate, GenConfig};
use lclean_core::lang::parse_annotated;
use lclean_core::pipeline::{run, PipelineConfig, RunOutcome, STATUS_FILE};
use lclean_core::prove::{prove_all, ProverConfig, SolverBackend, Verdict};
use lclean_core::status::StatusMap;
use lclean_core::vcgen::{gen_step1, gen_step2, gen_step3, wp, Purpose};
use lclean_core::{AnnotatedProgram, LabelId, Status, TestDatum, Value};

type Outcome = Result<String, String>;

const FUEL: u64 = 100_000;
const DOMAIN: (i64, i64) = (-3, 3);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)*) => {
        if !$cond {
            return Err(format!($($msg)*));
        }
    };
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn load_fixture(name: &str) -> AnnotatedProgram {
    parse_annotated(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

fn solver() -> Result<ProverConfig, String> {
    let mut cfg = ProverConfig::new(SolverBackend::from_env());
    cfg.batch = true;
    prove_all(&[], &cfg).map_err(|e| format!("no SMT solver: {e}"))?;
    Ok(cfg)
}

fn steps(s: &[u8]) -> BTreeSet<u8> {
    s.iter().copied().collect()
}

fn run_on(input: &Path, out: &Path, s: &[u8], criterion: Option<Criterion>, prover: ProverConfig) -> Result<RunOutcome, String> {
    run(&PipelineConfig {
        input: input.to_path_buf(),
        criterion,
        steps: steps(s),
        prover,
        outdir: out.to_path_buf(),
    })
    .map_err(|e| e.to_string())
}

fn ids(v: &[u32]) -> Vec<LabelId> {
    v.iter().map(|&x| LabelId(x)).collect()
}

/// Labels carrying a verdict.
fn marked(st: &StatusMap) -> BTreeSet<LabelId> {
    st.values().filter(|s| s.status != Status::Unknown).map(|s| s.id).collect()
}

fn criterion_1() -> Outcome {
    let prover = solver()?;
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let o = run_on(&fixture("triangle.lwl"), dir.path(), &[1, 2, 3], None, prover)?;
    let elapsed = start.elapsed();
    let st = &o.statuses;
    let infeasible: BTreeSet<LabelId> = st.values().filter(|s| s.status == Status::Infeasible).map(|s| s.id).collect();
    ensure!(infeasible == ids(&[9, 10]).into_iter().collect(), "infeasible {infeasible:?}");
    let dups: BTreeSet<(u32, u32)> = st
        .values()
        .filter_map(|s| match s.status {
            Status::DuplicateOf(o) => Some((o.0.min(s.id.0), o.0.max(s.id.0))),
            _ => None,
        })
        .collect();
    ensure!(
        dups == [(3, 7), (4, 8), (11, 12), (13, 14)].into_iter().collect(),
        "duplicates {dups:?}"
    );
    let by = |l: u32| match &st[&LabelId(l)].status {
        Status::SubsumedBy(v) => v.clone(),
        _ => Vec::new(),
    };
    ensure!(by(5).contains(&LabelId(1)), "l5 not subsumed by l1: {:?}", st[&LabelId(5)]);
    ensure!(by(2).contains(&LabelId(6)), "l2 not subsumed by l6: {:?}", st[&LabelId(2)]);
    // Every further mark must be a true relation on the program.
    let extra: Vec<LabelId> = marked(st)
        .into_iter()
        .filter(|l| ![2, 5, 7, 8, 9, 10, 12, 14].contains(&l.0))
        .collect();
    let oracle = oracle_check(&o.annotated, st, -20, 20, FUEL, 1 << 20).map_err(|e| e.to_string())?;
    ensure!(oracle.passed(), "oracle rejects {:?}", oracle.violations);
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!(
        "{{l9,l10}} infeasible, 4 duplicate pairs, l5<=l1, l2<=l6; extra oracle-confirmed marks {extra:?}; {:.1}s",
        elapsed.as_secs_f64()
    ))
}

fn criterion_2() -> Outcome {
    let prover = solver()?;
    let dir = tempfile::tempdir().unwrap();
    let o = run_on(&fixture("triangle_dc.lwl"), dir.path(), &[1, 2, 3], None, prover)?;
    let suite = vec![vec![Value::int(1), Value::int(2), Value::int(1)]];
    let vecs = measure(&o.annotated, &suite, FUEL).map_err(|e| e.to_string())?;
    let rep = adjust(&vecs, &o.statuses);
    ensure!(rep.raw_ratio == 0.5, "raw ratio {}", rep.raw_ratio);
    ensure!(rep.pruned_ratio == 0.0, "pruned ratio {}", rep.pruned_ratio);
    Ok(format!(
        "raw {}/{} = 50%, pruned {}/{} = 0%",
        rep.covered, rep.total, rep.covered_surviving, rep.surviving
    ))
}

fn criterion_3() -> Outcome {
    let groups: Vec<Vec<u32>> = detect_blocks(&load_fixture("fig3.lwl"))
        .iter()
        .map(|g| g.labels.iter().map(|l| l.0).collect())
        .collect();
    ensure!(groups == vec![vec![2], vec![3, 4, 1], vec![5, 6], vec![7]], "groups {groups:?}");
    Ok(format!("{groups:?}"))
}

fn criterion_4() -> Outcome {
    let mut rng = StdRng::seed_from_u64(4);
    let mut checked = 0;
    let mut best: Option<(f64, String)> = None;
    for i in 0..24 {
        let mut cfg = GenConfig::random(&mut rng);
        cfg.helpers = if i % 2 == 0 { 0 } else { rng.gen_range(2..=3) };
        cfg.max_stmts = 30;
        let base = generate(&mut rng, &cfg);
        for c in Criterion::ALL {
            let ap = annotate(&base, c);
            let pc = pair_counts(&ap, &detect_blocks(&ap));
            ensure!(
                pc.block <= pc.function && pc.function <= pc.program,
                "program {i} {c}: {pc:?}\n{}",
                ap.to_source()
            );
            checked += 1;
            if ap.program.functions.len() > 1 && pc.block > 0 {
                let ratio = pc.function as f64 / pc.block as f64;
                if best.as_ref().map_or(true, |(r, _)| ratio > *r) {
                    best = Some((ratio, format!("program {i} {c} {pc:?}")));
                }
            }
        }
    }
    let (ratio, which) = best.ok_or("no multi-function program with block pairs")?;
    ensure!(ratio > 5.0, "best function/block ratio {ratio:.2} ({which})");
    Ok(format!("{checked} program/criterion pairs ordered; function/block {ratio:.1}x on {which}"))
}

struct SoundnessRun {
    annotated: AnnotatedProgram,
    statuses: StatusMap,
}

/// Pipeline verdicts on the random corpus, shared by criteria 5 and 9.
fn corpus() -> &'static Result<(Vec<SoundnessRun>, Duration), String> {
    static CORPUS: OnceLock<Result<(Vec<SoundnessRun>, Duration), String>> = OnceLock::new();
    CORPUS.get_or_init(|| {
        let mut prover = solver()?;
        prover.timeout = Duration::from_millis(500);
        let start = Instant::now();
        let mut rng = StdRng::seed_from_u64(5);
        let dir = tempfile::tempdir().unwrap();
        let mut runs = Vec::new();
        for i in 0..200 {
            let cfg = GenConfig::random(&mut rng);
            let base = generate(&mut rng, &cfg);
            let input = dir.path().join(format!("p{i}.wl"));
            std::fs::write(&input, base.to_source()).unwrap();
            for c in Criterion::ALL {
                let out = dir.path().join(format!("p{i}_{c}"));
                let o = run_on(&input, &out, &[1, 2, 3], Some(c), prover.clone())
                    .map_err(|e| format!("program {i} {c}: {e}"))?;
                runs.push(SoundnessRun {
                    annotated: o.annotated,
                    statuses: o.statuses,
                });
            }
        }
        Ok((runs, start.elapsed()))
    })
}

fn criterion_5() -> Outcome {
    let (runs, pipeline_time) = corpus().as_ref().map_err(Clone::clone)?;
    let start = Instant::now();
    let mut marks = 0;
    for (k, r) in runs.iter().enumerate() {
        let v = oracle_check(&r.annotated, &r.statuses, DOMAIN.0, DOMAIN.1, FUEL, 1 << 20).map_err(|e| e.to_string())?;
        ensure!(
            v.passed(),
            "run {k}: {:?}\n{}",
            v.violations,
            r.annotated.to_source()
        );
        marks += marked(&r.statuses).len();
    }
    let total = *pipeline_time + start.elapsed();
    ensure!(total < Duration::from_secs(600), "took {total:?}");
    Ok(format!(
        "{} runs (200 programs x {} criteria), {marks} marks, 0 violations; {:.0}s",
        runs.len(),
        Criterion::ALL.len(),
        total.as_secs_f64()
    ))
}

/// Adds a `true` label next to each label so reachability shows up as a row.
fn with_reach_labels(ap: &AnnotatedProgram) -> (AnnotatedProgram, HashMap<LabelId, LabelId>) {
    let mut next = ap.next_id();
    let mut map = HashMap::new();
    let placements = ap
        .labels
        .iter()
        .map(|l| {
            let id = LabelId(next);
            next += 1;
            map.insert(l.id, id);
            Placement {
                before: l.location,
                label: Label {
                    id,
                    location: l.location,
                    predicate: lclean_core::lang::ast::Expr::Bool(true),
                    criterion: l.criterion,
                    origin: "reach".into(),
                },
            }
        })
        .collect();
    (insert_labels(ap, placements).expect("reach labels"), map)
}

fn criterion_6() -> Outcome {
    let prover = solver()?;
    let mut rng = StdRng::seed_from_u64(6);
    let cfg = GenConfig {
        labels: true,
        ..GenConfig::straight_line(3)
    };
    let mut programs = 0;
    let mut proven = 0;
    let mut goals = 0;
    while programs < 1000 {
        let ap = generate(&mut rng, &cfg);
        if ap.labels.is_empty() {
            continue;
        }
        programs += 1;
        let groups = detect_blocks(&ap);
        let mut asserts = gen_step1(&ap);
        asserts.extend(gen_step2(&ap, &StatusMap::new()));
        asserts.extend(gen_step3(&groups, &StatusMap::new()).into_iter().flat_map(|(_, a)| a));
        let vcs = wp(&ap, &groups, &asserts);
        let results = prove_all(&vcs, &prover).map_err(|e| e.to_string())?;
        goals += vcs.len();
        let (aug, reach) = with_reach_labels(&ap);
        let suite = exhaustive_suite(&aug, DOMAIN.0, DOMAIN.1, 1 << 20).unwrap();
        let vecs = measure(&aug, &suite, FUEL).map_err(|e| e.to_string())?;
        let row = |l: LabelId| &vecs.rows[&l];
        for (vc, r) in vcs.iter().zip(&results) {
            if r.verdict != Verdict::Proven {
                continue;
            }
            proven += 1;
            let holds = match vc.purpose {
                Purpose::Infeasible { label } => row(label).none(),
                Purpose::AlwaysTrue { label } => row(label) == row(reach[&label]),
                Purpose::Implies { from, to, .. } => row(from).is_subset(row(to)),
            };
            ensure!(holds, "{} proven but false on the domain\n{}", vc.id, ap.to_source());
        }
    }
    let states = substitution_states()?;
    Ok(format!(
        "{programs} programs, {goals} goals, {proven} proven and confirmed; substitution agrees on {states} states"
    ))
}

/// Compares wp(v := e, Q) with running the assignment on random states.
fn substitution_states() -> Result<usize, String> {
    let mut rng = StdRng::seed_from_u64(66);
    let vars = ["a", "b", "c"];
    let mut states = 0;
    while states < 10_000 {
        let target = vars[rng.gen_range(0..3)];
        let e = expr_source(&mut rng, &vars, false, true);
        let q = expr_source(&mut rng, &vars, true, true);
        let src = format!(
            "int main(int a, int b, int c) {{\n  {target} = {e};\n  // label(1, \"{q}\", cc)\n  return 0;\n}}\n"
        );
        let ap = parse_annotated(&src).map_err(|err| format!("{err}\n{src}"))?;
        let vcs = wp(&ap, &detect_blocks(&ap), &gen_step2(&ap, &StatusMap::new()));
        let vc = &vcs[0];
        let (aug, reach) = with_reach_labels(&ap);
        let suite: Vec<TestDatum> = (0..20)
            .map(|_| (0..3).map(|_| Value::int(rng.gen_range(-20..=20))).collect())
            .collect();
        let vecs: CoverageVector = measure(&aug, &suite, FUEL).map_err(|e| e.to_string())?;
        let (cov, reached): (&Bits, &Bits) = (&vecs.rows[&LabelId(1)], &vecs.rows[&reach[&LabelId(1)]]);
        for (k, input) in suite.iter().enumerate() {
            let env: HashMap<&str, Value> = vars.iter().copied().zip(input.iter().cloned()).collect();
            let got = vc.store.eval(vc.goal, &env);
            let want = !reached.get(k) || cov.get(k);
            ensure!(
                got == Some(Value::Bool(want)),
                "state {input:?}: wp gives {got:?}, execution gives {want}\n{src}"
            );
            states += 1;
        }
    }
    Ok(states)
}

fn criterion_7() -> Outcome {
    let prover = solver()?;
    let input = fixture("hard.lwl");
    let mut quick = prover.clone();
    quick.timeout = Duration::from_secs(1);
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let a = run_on(&input, dir.path(), &[1, 2, 3], None, quick)?;
    let quick_time = start.elapsed();
    let timeouts: Vec<&str> = a.proofs.iter().filter(|p| p.verdict == Verdict::Timeout).map(|p| p.vc_id.as_str()).collect();
    ensure!(timeouts == vec!["vc_step1_l3"], "timeouts {timeouts:?}");

    // Reference: each remaining goal on its own with a generous timeout.
    let mut reference = prover.clone();
    reference.batch = false;
    reference.timeout = Duration::from_secs(30);
    let ap = &a.annotated;
    let groups = detect_blocks(ap);
    let earlier: BTreeMap<u8, StatusMap> = (1..=3)
        .map(|s| {
            let st: StatusMap = a
                .statuses
                .iter()
                .filter(|(_, v)| v.step < s && v.status != Status::Unknown)
                .map(|(k, v)| (*k, v.clone()))
                .collect();
            (s, st)
        })
        .collect();
    let mut asserts = gen_step1(ap);
    asserts.extend(gen_step2(ap, &earlier[&2]));
    asserts.extend(gen_step3(&groups, &earlier[&3]).into_iter().flat_map(|(_, a)| a));
    let vcs: Vec<_> = wp(ap, &groups, &asserts).into_iter().filter(|v| v.id != "vc_step1_l3").collect();
    let refs = prove_all(&vcs, &reference).map_err(|e| e.to_string())?;
    let got: BTreeMap<&str, Verdict> = a.proofs.iter().map(|p| (p.vc_id.as_str(), p.verdict)).collect();
    for r in &refs {
        ensure!(r.verdict != Verdict::Timeout, "reference timed out on {}", r.vc_id);
        ensure!(got.get(r.vc_id.as_str()) == Some(&r.verdict), "{}: {:?} vs reference {:?}", r.vc_id, got.get(r.vc_id.as_str()), r.verdict);
    }
    ensure!(got.len() == refs.len() + 1, "{} verdicts vs {} reference", got.len(), refs.len());

    let stub = SolverBackend::Stub { min: -3, max: 3, exhaustive: true };
    let mut bytes = Vec::new();
    for jobs in [1, 8] {
        let d = tempfile::tempdir().unwrap();
        let cfg = ProverConfig { jobs, ..ProverConfig::new(stub.clone()) };
        run_on(&fixture("triangle.lwl"), d.path(), &[1, 2, 3], None, cfg)?;
        bytes.push(std::fs::read(d.path().join(STATUS_FILE)).unwrap());
    }
    ensure!(bytes[0] == bytes[1], "stub statuses differ between --jobs 1 and 8");
    Ok(format!(
        "1 timeout in {:.1}s, {} other verdicts match the reference; stub jobs 1/8 identical",
        quick_time.as_secs_f64(),
        refs.len()
    ))
}

fn criterion_8() -> Outcome {
    let prover = solver()?;
    let dir = tempfile::tempdir().unwrap();
    let o = run_on(&fixture("triangle.lwl"), dir.path(), &[1, 2, 3], None, prover)?;
    let counts: Vec<usize> = o.record.steps.iter().map(|s| s.vcs).collect();
    let labels = o.annotated.labels.len();
    let infeasible = o.statuses.values().filter(|s| s.status == Status::Infeasible).count();
    let decided_before_3: BTreeSet<LabelId> = o
        .statuses
        .values()
        .filter(|s| s.step < 3 && s.status != Status::Unknown)
        .map(|s| s.id)
        .collect();
    let ks: Vec<usize> = o
        .groups
        .iter()
        .map(|g| g.labels.iter().filter(|l| !decided_before_3.contains(l)).count())
        .collect();
    let step3: usize = ks.iter().map(|k| k * k.saturating_sub(1)).sum();
    let expected = vec![labels, labels - infeasible, step3];
    ensure!(counts == expected, "counts {counts:?}, expected {expected:?}");
    ensure!(ks.contains(&8), "group sizes {ks:?}");
    ensure!(counts == vec![14, 12, 62], "counts {counts:?}");
    Ok(format!("step VCs {counts:?}; group survivors {ks:?} (8 -> 56)"))
}

fn criterion_9() -> Outcome {
    let (runs, _) = corpus().as_ref().map_err(Clone::clone)?;
    let mut rng = StdRng::seed_from_u64(9);
    let mut suites = 0;
    for (k, r) in runs.iter().enumerate() {
        let sound = marked(&r.statuses);
        let params = r.annotated.program.entry_function().params.len();
        for _ in 0..3 {
            let n = rng.gen_range(1..=8);
            let suite: Vec<TestDatum> = (0..n)
                .map(|_| (0..params).map(|_| Value::int(rng.gen_range(DOMAIN.0..=DOMAIN.1))).collect())
                .collect();
            let likely = dynamic_detect(&measure(&r.annotated, &suite, FUEL).map_err(|e| e.to_string())?).marked();
            let missing: Vec<_> = sound.difference(&likely).collect();
            ensure!(missing.is_empty(), "run {k}: sound marks {missing:?} not likely");
            suites += 1;
        }
        let full = exhaustive_suite(&r.annotated, DOMAIN.0, DOMAIN.1, 1 << 20).map_err(|e| e.to_string())?;
        let likely = dynamic_detect(&measure(&r.annotated, &full, FUEL).map_err(|e| e.to_string())?);
        let likely_marked = likely.marked();
        let missing: Vec<_> = sound.difference(&likely_marked).collect();
        ensure!(missing.is_empty(), "run {k}: sound marks {missing:?} not likely (exhaustive)");
        suites += 1;
        // The oracle decides infeasibility label by label.
        let truly: BTreeSet<LabelId> = r
            .annotated
            .labels
            .iter()
            .filter(|l| {
                let one: StatusMap = [(l.id, lclean_core::LabelStatus { id: l.id, status: Status::Infeasible, step: 1 })].into();
                oracle_check(&r.annotated, &one, DOMAIN.0, DOMAIN.1, FUEL, 1 << 20).is_ok_and(|v| v.passed())
            })
            .map(|l| l.id)
            .collect();
        ensure!(likely.infeasible == truly, "run {k}: likely infeasible {:?} vs oracle {:?}", likely.infeasible, truly);
    }
    Ok(format!("{} runs, {suites} suites: sound marks within likely marks; exhaustive likely-infeasible = oracle", runs.len()))
}

fn main() {
    let checks: [(u8, &str, fn() -> Outcome); 9] = [
        (1, "triangle golden run", criterion_1),
        (2, "coverage adjustment", criterion_2),
        (3, "block detection golden", criterion_3),
        (4, "pair-count ordering", criterion_4),
        (5, "soundness against the oracle", criterion_5),
        (6, "WP correctness", criterion_6),
        (7, "prover robustness", criterion_7),
        (8, "step economy", criterion_8),
        (9, "dynamic-baseline containment", criterion_9),
    ];
    let only: Option<u8> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (n, name, check) in checks {
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {n} PASS  {name} [{secs:.1}s]: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n} FAIL  {name} [{secs:.1}s]: {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
