use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

use lclean_core::annotate::{annotate, Criterion};
use lclean_core::blocks::detect_blocks;
use lclean_core::coverage::{adjust, dynamic_detect, exhaustive_suite, measure, Bits, CoverageVector};
use lclean_core::gen::{generate, generate_source, GenConfig};
use lclean_core::lang::interp::execute;
use lclean_core::lang::parse_annotated;
use lclean_core::status::{self, check_integrity, resolve_group, StatusMap};
use lclean_core::{LabelId, LabelStatus, Status};

const FUEL: u64 = 100_000;

fn program(seed: u64, labels: bool) -> lclean_core::AnnotatedProgram {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut cfg = GenConfig::random(&mut rng);
    cfg.labels = labels;
    generate(&mut rng, &cfg)
}

fn rows_strategy() -> impl Strategy<Value = Vec<Vec<bool>>> {
    (1usize..7, 1usize..9).prop_flat_map(|(n, t)| proptest::collection::vec(proptest::collection::vec(any::<bool>(), t), n))
}

fn bits(row: &[bool]) -> Bits {
    let mut b = Bits::new(row.len());
    for (i, &x) in row.iter().enumerate() {
        if x {
            b.set(i);
        }
    }
    b
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn printing_round_trips(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let cfg = GenConfig { labels: true, ..GenConfig::random(&mut rng) };
        let src = generate_source(&mut rng, &cfg);
        let ap = parse_annotated(&src).unwrap();
        let again = parse_annotated(&ap.to_source()).unwrap();
        prop_assert_eq!(ap.to_source(), again.to_source());
        prop_assert_eq!(ap.labels.len(), again.labels.len());
    }

    #[test]
    fn labels_do_not_change_behaviour(seed in any::<u64>(), a in -3i64..=3, b in -3i64..=3, c in -3i64..=3) {
        let base = program(seed, false);
        let inputs: Vec<_> = [a, b, c]
            .iter()
            .take(base.program.entry_function().params.len())
            .map(|&v| lclean_core::Value::int(v))
            .collect();
        let plain = execute(&base.program, &inputs, FUEL).unwrap();
        for crit in Criterion::ALL {
            let ap = annotate(&base, crit);
            let t = execute(&ap.program, &inputs, FUEL).unwrap();
            prop_assert_eq!(&t.termination, &plain.termination);
            prop_assert_eq!(&t.return_value, &plain.return_value);
        }
    }

    #[test]
    fn co_reached_labels_are_reached_together(seed in any::<u64>()) {
        let mut ap = program(seed, true);
        // Predicates are replaced by `true` so a covered label is a reached one.
        for l in &mut ap.labels {
            l.predicate = lclean_core::lang::ast::Expr::Bool(true);
        }
        let suite = exhaustive_suite(&ap, -2, 2, 1 << 16).unwrap();
        let vecs = measure(&ap, &suite, FUEL).unwrap();
        for g in detect_blocks(&ap) {
            let first = &vecs.rows[&g.labels[0]];
            for l in &g.labels[1..] {
                prop_assert_eq!(&vecs.rows[l], first, "group {:?}\n{}", g.labels, ap.to_source());
            }
        }
    }

    #[test]
    fn resolved_marks_agree_with_cover_sets(rows in rows_strategy()) {
        let nodes: Vec<LabelId> = (1..=rows.len() as u32).map(LabelId).collect();
        let b: Vec<Bits> = rows.iter().map(|r| bits(r)).collect();
        let mut edges = Vec::new();
        for i in 0..rows.len() {
            for j in 0..rows.len() {
                if i != j && b[i].is_subset(&b[j]) {
                    edges.push((nodes[i], nodes[j]));
                }
            }
        }
        let out = resolve_group(&nodes, &edges);
        let row = |l: LabelId| &b[l.0 as usize - 1];
        for s in &out {
            match &s.status {
                Status::DuplicateOf(o) => {
                    prop_assert_eq!(row(s.id), row(*o));
                    prop_assert!(*o < s.id);
                }
                Status::SubsumedBy(by) => {
                    prop_assert!(!by.is_empty());
                    for x in by {
                        prop_assert!(row(*x).is_subset(row(s.id)));
                    }
                }
                other => prop_assert!(false, "unexpected {:?}", other),
            }
        }
        let map: StatusMap = out.iter().map(|s| (s.id, s.clone())).collect();
        prop_assert!(check_integrity(&map).is_ok());
        // Some label of every group stays unmarked.
        prop_assert!(out.len() < nodes.len());
        prop_assert_eq!(resolve_group(&nodes, &edges), out);
    }

    #[test]
    fn status_files_round_trip(rows in rows_strategy()) {
        let nodes: Vec<LabelId> = (1..=rows.len() as u32).map(LabelId).collect();
        let b: Vec<Bits> = rows.iter().map(|r| bits(r)).collect();
        let edges: Vec<_> = (0..rows.len())
            .flat_map(|i| (0..rows.len()).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && b[i].is_subset(&b[j]))
            .map(|(i, j)| (nodes[i], nodes[j]))
            .collect();
        let mut map: StatusMap = resolve_group(&nodes, &edges).into_iter().map(|s| (s.id, s)).collect();
        map.insert(LabelId(100), LabelStatus { id: LabelId(100), status: Status::Infeasible, step: 1 });
        let text = status::to_text(&map);
        prop_assert_eq!(status::parse(std::path::Path::new("mem"), &text).unwrap(), map);
    }

    #[test]
    fn pruning_only_shrinks_the_denominator(rows in rows_strategy(), marks in proptest::collection::vec(any::<bool>(), 7)) {
        let vecs = CoverageVector {
            tests: rows[0].len(),
            rows: rows.iter().enumerate().map(|(i, r)| (LabelId(i as u32 + 1), bits(r))).collect(),
        };
        let mut statuses = StatusMap::new();
        let raw = adjust(&vecs, &statuses);
        for (i, r) in rows.iter().enumerate() {
            if marks[i] && !r.iter().any(|&x| x) {
                let id = LabelId(i as u32 + 1);
                statuses.insert(id, LabelStatus { id, status: Status::Infeasible, step: 1 });
            }
        }
        let pruned = adjust(&vecs, &statuses);
        prop_assert_eq!(raw.raw_ratio, pruned.raw_ratio);
        prop_assert!(pruned.surviving <= raw.surviving);
        prop_assert_eq!(pruned.covered_surviving, raw.covered_surviving);
        prop_assert!(pruned.pruned_ratio >= raw.pruned_ratio);
    }

    #[test]
    fn likely_marks_follow_rows(rows in rows_strategy()) {
        let vecs = CoverageVector {
            tests: rows[0].len(),
            rows: rows.iter().enumerate().map(|(i, r)| (LabelId(i as u32 + 1), bits(r))).collect(),
        };
        let m = dynamic_detect(&vecs);
        let row: BTreeMap<LabelId, &Bits> = vecs.rows.iter().map(|(k, v)| (*k, v)).collect();
        for (id, r) in &row {
            prop_assert_eq!(m.infeasible.contains(id), r.none());
        }
        for (a, b) in &m.duplicates {
            prop_assert!(a < b);
            prop_assert_eq!(row[a], row[b]);
        }
        for (l, s) in &m.subsumed {
            prop_assert!(row[s].is_subset(row[l]) && row[s] != row[l]);
        }
    }
}
