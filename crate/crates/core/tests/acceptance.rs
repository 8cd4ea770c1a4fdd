//! Acceptance suite: one test per criterion, each printing a PASS line.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ptbench_core::compare::{classify, PoiOutcome, PrecisionClass};
use ptbench_core::contexts::merge_poi_contexts;
use ptbench_core::fixtures;
use ptbench_core::flow::transfer;
use ptbench_core::ir::{MemLoc, Node, ProgramIR};
use ptbench_core::memory::PointsToMap;
use ptbench_core::patterns::Analysis;
use ptbench_core::pipeline::{Budgets, Workbench};
use ptbench_core::report::{compare_report, to_json_string};
use ptbench_core::testgen::{generate, GenConfig};
use ptbench_core::SourceProgram;

fn budgets() -> Budgets {
    Budgets::default()
}

fn fixture_wb(name: &str) -> Workbench {
    let (_, text) = fixtures::all().into_iter().find(|(n, _)| *n == name).unwrap();
    Workbench::load(fixtures::source(name, text)).unwrap()
}

fn class_of(outcome: PoiOutcome) -> PrecisionClass {
    match outcome {
        PoiOutcome::Class(c) => c,
        PoiOutcome::Unreachable => panic!("unexpected unreachable PoI"),
    }
}

/// Criterion 1: the fixture corpus reproduces the per-fixture precision
/// classes exactly, in under five seconds.
#[test]
fn criterion_1_fixture_classes() {
    let start = Instant::now();
    let expect: &[(&str, &[(u32, PrecisionClass)])] = &[
        ("P1", &[(6, PrecisionClass::FisLtFsEqCs)]),
        ("P2", &[(5, PrecisionClass::EqAll)]),
        ("P3", &[(4, PrecisionClass::EqAll)]),
        ("P4", &[(5, PrecisionClass::FisEqFsLtCs)]),
        ("P5", &[(9, PrecisionClass::FisLtFsEqCs), (11, PrecisionClass::FisLtFsLtCs)]),
        ("P6", &[(3, PrecisionClass::EqAll)]),
    ];
    for (name, lines) in expect {
        let wb = fixture_wb(name);
        let out = wb.run_compare(&budgets()).unwrap();
        assert_eq!(out.records.len(), lines.len(), "{name}: PoI count");
        for (line, want) in *lines {
            let record = out
                .records
                .iter()
                .find(|r| r.site.span.line == *line)
                .unwrap_or_else(|| panic!("{name}: no PoI at line {line}"));
            assert_eq!(class_of(record.outcome), *want, "{name} line {line}");
        }
        if *name == "P6" {
            let record = &out.records[0];
            let heap = MemLoc::Heap(fixtures::P6_MALLOC_LINE);
            assert_eq!(record.fs_set, [heap].into_iter().collect::<BTreeSet<_>>());
            assert_eq!(record.fis_set, [heap].into_iter().collect::<BTreeSet<_>>());
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    println!("ACCEPTANCE 1 PASS: fixture classes match (P1 FIS<FS=CS, P2/P3/P6 FIS=FS=CS, P4 FIS=FS<CS, P5 FIS<FS<CS) in {elapsed:?}");
}

/// Ordering violations at every PoI of one analyzed program.
fn ordering_violations(wb: &Workbench) -> usize {
    let out = wb.run_compare(&budgets()).unwrap();
    let mut violations = 0;
    for r in &out.records {
        match r.outcome {
            PoiOutcome::Unreachable => {}
            PoiOutcome::Class(_) => {
                if !r.fs_set.is_subset(&r.fis_set) {
                    violations += 1;
                }
                for (_, cs) in &r.cs_sets {
                    if !cs.is_subset(&r.fs_set) {
                        violations += 1;
                    }
                }
            }
        }
    }
    violations
}

/// Criterion 2: `∀i: CS_i ⊆ FS ⊆ FIS` at every PoI, on the fixtures and on
/// 500 random programs.
#[test]
fn criterion_2_ordering_soundness() {
    let mut checked = 0usize;
    let mut violations = 0usize;
    for (name, text) in fixtures::all() {
        let wb = Workbench::load(fixtures::source(name, text)).unwrap();
        checked += wb.pois.len();
        violations += ordering_violations(&wb);
    }
    for seed in 0..500u64 {
        let text = generate(seed, &GenConfig::small());
        let wb = Workbench::load(SourceProgram::single(format!("gen{seed}.mc"), text)).unwrap();
        checked += wb.pois.len();
        violations += ordering_violations(&wb);
    }
    assert_eq!(violations, 0);
    println!("ACCEPTANCE 2 PASS: CS ⊆ FS ⊆ FIS held at all {checked} PoIs across fixtures and 500 random programs (0 violations)");
}

/// Criterion 3: concrete observations are contained in the merged CS set,
/// which is contained in FS, which is contained in FIS, for loop bounds
/// 0 through 3; under 60 seconds.
#[test]
fn criterion_3_oracle_containment() {
    let start = Instant::now();
    let mut programs: Vec<(String, String)> = fixtures::all()
        .into_iter()
        .map(|(n, t)| (n.to_string(), t.to_string()))
        .collect();
    // Path enumeration is exponential in branch structure; random programs
    // whose k=3 enumeration would blow the budget are skipped and replaced
    // so that exactly 100 random programs are checked.
    let oracle_budgets = Budgets { max_paths: 400_000, ..budgets() };
    let mut seed = 1000u64;
    let mut accepted = 0;
    while accepted < 100 {
        let name = format!("gen{seed}.mc");
        let text = generate(seed, &GenConfig::oracle_friendly());
        seed += 1;
        let wb = Workbench::load(SourceProgram::single(name.clone(), text.clone())).unwrap();
        if wb.run_oracle(3, &oracle_budgets).is_ok() {
            programs.push((name, text));
            accepted += 1;
        }
    }
    let mut checked = 0usize;
    for (name, text) in &programs {
        let wb = Workbench::load(SourceProgram::single(name.clone(), text.clone())).unwrap();
        let out = wb.run_compare(&budgets()).unwrap();
        for k in 0..=3u32 {
            let oracle = wb.run_oracle(k, &oracle_budgets).unwrap();
            for r in &out.records {
                let observed = match oracle.observations.get(&r.site.id) {
                    Some(o) => o,
                    None => continue,
                };
                checked += 1;
                let merged = merge_poi_contexts(&r.cs_sets);
                assert!(
                    observed.is_subset(&merged),
                    "{name} k={k} PoI {:?}: observed ⊄ CS",
                    r.site.span
                );
                assert!(merged.is_subset(&r.fs_set), "{name} k={k}: CS ⊄ FS");
                assert!(r.fs_set.is_subset(&r.fis_set), "{name} k={k}: FS ⊄ FIS");
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    println!("ACCEPTANCE 3 PASS: oracle ⊆ CS ⊆ FS ⊆ FIS at {checked} observed (PoI, bound) points on fixtures + 100 random programs in {elapsed:?}");
}

/// Criterion 4: over ≥10,000 random set triples satisfying the ordering
/// precondition, exactly one of the four class predicates holds.
#[test]
fn criterion_4_classifier_exhaustive_exclusive() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let universe: Vec<MemLoc> = (0..8).map(MemLoc::Heap).collect();
    let subset = |of: &BTreeSet<MemLoc>, rng: &mut ChaCha8Rng| -> BTreeSet<MemLoc> {
        of.iter().copied().filter(|_| rng.random_bool(0.6)).collect()
    };
    for trial in 0..10_000 {
        let fis: BTreeSet<MemLoc> =
            universe.iter().copied().filter(|_| rng.random_bool(0.7)).collect();
        let fs = subset(&fis, &mut rng);
        let n = rng.random_range(1..4);
        let cs: Vec<(u32, BTreeSet<MemLoc>)> =
            (0..n).map(|i| (i, subset(&fs, &mut rng))).collect();

        let class = classify(&fis, &fs, &cs).unwrap();
        let eq_all = fs == fis && cs.iter().all(|(_, c)| *c == fs);
        let lt_lt = cs.iter().any(|(_, c)| *c != fs) && fs != fis;
        let eq_lt = cs.iter().any(|(_, c)| *c != fs) && fs == fis;
        let lt_eq = cs.iter().all(|(_, c)| *c == fs) && fs != fis;
        let holds = [eq_all, lt_lt, eq_lt, lt_eq];
        assert_eq!(holds.iter().filter(|h| **h).count(), 1, "trial {trial}");
        let expected = match holds.iter().position(|h| *h).unwrap() {
            0 => PrecisionClass::EqAll,
            1 => PrecisionClass::FisLtFsLtCs,
            2 => PrecisionClass::FisEqFsLtCs,
            _ => PrecisionClass::FisLtFsEqCs,
        };
        assert_eq!(class, expected, "trial {trial}");
    }
    println!("ACCEPTANCE 4 PASS: exactly one class predicate held on 10000 ordered set triples");
}

/// Criterion 5: the GEN/KILL transfer of each assignment form matches its
/// stated post-condition on empty, singleton, multiple, and
/// summary-location inputs; strong updates only for a singleton non-summary
/// pointee.
#[test]
fn criterion_5_transfer_unit_suite() {
    // One program declaring every shape the cases need.
    let wb = Workbench::load(SourceProgram::single(
        "transfer.mc",
        "int a;\nint b;\nint c;\nint *arr[2];\nint *p;\nint *q;\nint *r;\nint **pp;\nvoid main() {\n    p = &a;\n    q = &b;\n    r = &c;\n    pp = &p;\n    arr[1] = &a;\n    arr[0] = p;\n    *pp = q;\n    p = *pp;\n    p = q;\n}\n",
    ))
    .unwrap();
    let ir = &wb.ir;
    let f = ir.func(ir.entry);
    let node = |pick: fn(&Node) -> bool| f.node_ids().find(|n| pick(f.node(*n))).unwrap();
    let addr = node(|n| matches!(n, Node::AddressOf { dst: MemLoc::Var(_), .. }));
    let addr_arr = node(|n| matches!(n, Node::AddressOf { dst: MemLoc::Array(_), .. }));
    let store = node(|n| matches!(n, Node::Store { .. }));
    let load = node(|n| matches!(n, Node::Load { .. }));
    // the final `p = q` copy
    let copy =
        f.node_ids().filter(|n| matches!(f.node(*n), Node::Copy { .. })).last().unwrap();
    let loc = |s: &str| ir.parse_loc(s).unwrap();
    let (a, b, c) = (loc("g:a"), loc("g:b"), loc("g:c"));
    let (p, q, r, pp, arr) = (loc("g:p"), loc("g:q"), loc("g:r"), loc("g:pp"), loc("arr:arr"));
    let set = |locs: &[MemLoc]| -> BTreeSet<MemLoc> { locs.iter().copied().collect() };
    let mut diags = BTreeSet::new();
    let run = |n, entries: &[(MemLoc, &[MemLoc])], diags: &mut BTreeSet<_>| -> PointsToMap {
        let mut in_map = PointsToMap::new();
        for (k, v) in entries {
            in_map.set(*k, v.iter().copied().collect());
        }
        transfer(ir, f, n, &in_map, diags)
    };

    // Address-of `p = &a`: KILL {p}, GEN {(p,{a})} regardless of IN.
    assert_eq!(run(addr, &[], &mut diags).pointees(p), set(&[a]));
    assert_eq!(run(addr, &[(p, &[b])], &mut diags).pointees(p), set(&[a]));
    assert_eq!(run(addr, &[(p, &[b, c])], &mut diags).pointees(p), set(&[a]));
    // Summary destination (monolithic array cell): weak even for address-of.
    let out = run(addr_arr, &[(arr, &[b])], &mut diags);
    assert_eq!(out.pointees(arr), set(&[a, b]));

    // Copy `p = q`: KILL {p}, GEN {(p, IN(q))}; empty IN leaves p unbound.
    assert!(run(copy, &[(p, &[a])], &mut diags).get(p).is_none());
    assert_eq!(run(copy, &[(q, &[b]), (p, &[a])], &mut diags).pointees(p), set(&[b]));
    assert_eq!(run(copy, &[(q, &[b, c]), (p, &[a])], &mut diags).pointees(p), set(&[b, c]));

    // Load `p = *pp`: GEN {(p, ∪ IN(x) for x in IN(pp))}.
    assert!(run(load, &[(p, &[a])], &mut diags).get(p).is_none());
    assert_eq!(
        run(load, &[(pp, &[q]), (q, &[b]), (p, &[a])], &mut diags).pointees(p),
        set(&[b])
    );
    assert_eq!(
        run(load, &[(pp, &[q, r]), (q, &[b]), (r, &[c]), (p, &[a])], &mut diags).pointees(p),
        set(&[b, c])
    );
    // Summary pointee: gathers through the array cell.
    assert_eq!(
        run(load, &[(pp, &[arr]), (arr, &[b, c]), (p, &[a])], &mut diags).pointees(p),
        set(&[b, c])
    );

    // Store `*pp = q`.
    // Empty IN(pp): no targets, no kill; IN passes through.
    let out = run(store, &[(q, &[b]), (p, &[a])], &mut diags);
    assert_eq!(out.pointees(p), set(&[a]));
    // Single non-summary pointee: strong update kills p's old binding.
    let out = run(store, &[(pp, &[p]), (p, &[a]), (q, &[b])], &mut diags);
    assert_eq!(out.pointees(p), set(&[b]));
    // Multiple pointees: weak, both keep old bindings.
    let out = run(store, &[(pp, &[p, r]), (p, &[a]), (r, &[c]), (q, &[b])], &mut diags);
    assert_eq!(out.pointees(p), set(&[a, b]));
    assert_eq!(out.pointees(r), set(&[b, c]));
    // Singleton summary pointee: still weak.
    let out = run(store, &[(pp, &[arr]), (arr, &[a]), (q, &[b])], &mut diags);
    assert_eq!(out.pointees(arr), set(&[a, b]));

    println!("ACCEPTANCE 5 PASS: transfer post-conditions hold for all 4 node kinds x 4 input shapes; strong update only on singleton non-summary pointees");
}

/// Criterion 6: a FIS recommendation implies every PoI classifies
/// all-equal; an FS recommendation implies no PoI gains from context
/// sensitivity.
#[test]
fn criterion_6_recommender_consistency() {
    let mut counterexamples = 0;
    let mut summary = Vec::new();
    for (name, text) in fixtures::all() {
        let wb = Workbench::load(fixtures::source(name, text)).unwrap();
        let (_, rec) = wb.recommend();
        let out = wb.run_compare(&budgets()).unwrap();
        for r in &out.records {
            let class = class_of(r.outcome);
            match rec.analysis {
                Analysis::Fis => {
                    if class != PrecisionClass::EqAll {
                        counterexamples += 1;
                    }
                }
                Analysis::Fs => {
                    if matches!(
                        class,
                        PrecisionClass::FisEqFsLtCs | PrecisionClass::FisLtFsLtCs
                    ) {
                        counterexamples += 1;
                    }
                }
                Analysis::Cs => {}
            }
        }
        summary.push(format!("{name}:{}", rec.analysis.name()));
    }
    assert_eq!(counterexamples, 0);
    // The per-fixture recommendations themselves are pinned.
    assert_eq!(summary, ["P1:FS", "P2:FIS", "P3:FIS", "P4:CS", "P5:CS", "P6:FIS"]);
    println!("ACCEPTANCE 6 PASS: recommendations ({}) are consistent with observed classes (0 counterexamples)", summary.join(", "));
}

/// Criterion 7: on a ~2 KLOC generated program, median-of-5 wall times
/// satisfy FIS ≤ FS ≤ CS with FIS at least 10x faster than FS.
#[test]
fn criterion_7_timing_ordering() {
    let text = generate(2024, &GenConfig::sized(2));
    let lines = text.lines().count();
    assert!(lines >= 1500, "corpus only {lines} lines");
    let wb = Workbench::load(SourceProgram::single("large.mc", text)).unwrap();
    let b = budgets();
    let median = |mut xs: Vec<f64>| -> f64 {
        xs.sort_by(|x, y| x.partial_cmp(y).unwrap());
        xs[xs.len() / 2]
    };
    let mut fis_t = Vec::new();
    let mut fs_t = Vec::new();
    let mut cs_t = Vec::new();
    for _ in 0..5 {
        let out = wb.run_compare(&b).unwrap();
        fis_t.push(out.timing.fis_seconds);
        fs_t.push(out.timing.fs_seconds);
        cs_t.push(out.timing.cs_seconds);
    }
    let (fis, fs, cs) = (median(fis_t), median(fs_t), median(cs_t));
    assert!(fis <= fs, "FIS {fis:.4}s > FS {fs:.4}s");
    assert!(fs <= cs, "FS {fs:.4}s > CS {cs:.4}s");
    assert!(fis * 10.0 <= fs, "FIS {fis:.4}s not 10x faster than FS {fs:.4}s");
    println!("ACCEPTANCE 7 PASS: {lines}-line corpus medians FIS {fis:.4}s <= FS {fs:.4}s <= CS {cs:.4}s, FIS {:.0}x faster than FS", fs / fis);
}

/// Criterion 8: `compare` is deterministic — two runs produce byte-identical
/// JSON reports on every fixture.
#[test]
fn criterion_8_determinism() {
    for (name, text) in fixtures::all() {
        let json = |_: ()| {
            let wb = Workbench::load(fixtures::source(name, text)).unwrap();
            let out = wb.run_compare(&budgets()).unwrap();
            to_json_string(&compare_report(&wb.ir, &out, false))
        };
        assert_eq!(json(()), json(()), "{name}");
    }
    println!("ACCEPTANCE 8 PASS: compare JSON is byte-identical across runs on all fixtures");
}

/// PoI counts per fixture equal the hand-counted dereference levels.
#[test]
fn poi_counts_match_textual_scan() {
    let expected = [("P1", 1), ("P2", 1), ("P3", 1), ("P4", 1), ("P5", 2), ("P6", 1)];
    for (name, count) in expected {
        let wb = fixture_wb(name);
        assert_eq!(wb.pois.len(), count, "{name}");
    }
}

/// Lowering leaves only canonical node kinds in the IR.
#[test]
fn lowered_node_kinds_are_canonical() {
    for seed in 0..25u64 {
        let text = generate(seed, &GenConfig::small());
        let wb = Workbench::load(SourceProgram::single("gen.mc", text)).unwrap();
        check_structure(&wb.ir);
    }
    for (name, text) in fixtures::all() {
        let wb = Workbench::load(fixtures::source(name, text)).unwrap();
        check_structure(&wb.ir);
    }
}

fn check_structure(ir: &ProgramIR) {
    ir.validate().unwrap();
    for f in &ir.funcs {
        for n in f.node_ids() {
            match f.node(n) {
                Node::Entry
                | Node::Exit
                | Node::Branch
                | Node::Nop
                | Node::AddressOf { .. }
                | Node::Copy { .. }
                | Node::Load { .. }
                | Node::Store { .. }
                | Node::Alloc { .. }
                | Node::Call { .. } => {}
            }
        }
    }
}
