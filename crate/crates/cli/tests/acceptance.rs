//! One PASS/FAIL line per acceptance criterion.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use abducer_cli::{check_summaries, corpus_files, corpus_row, load, Flags};
use abducer_core::biabduction::{canonical, Contract};
use abducer_core::engine::{analyze_program, Analysis, Fault, Options, Stage, Status};
use abducer_core::frontend::{FnKind, Program};
use abducer_core::interpreter::{check_inductive, OracleOptions};
use abducer_core::seplogic::{parse_heap_with, BlockTable};
use abducer_core::testgen;

type Outcome = Result<String, String>;
type Property = fn(u64) -> Result<(), String>;
type Criterion = fn() -> Outcome;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn program(rel: &str) -> Result<Program, String> {
    load(&root().join(rel)).map_err(|e| e.to_string())
}

fn contract(pre: &str, posts: &[&str], blocks: &BlockTable) -> Result<Contract, String> {
    let h = |s: &str| parse_heap_with(s, blocks.blocks()).map_err(|e| format!("{s}: {e}"));
    Ok(Contract { pre: h(pre)?, posts: posts.iter().map(|q| h(q)).collect::<Result<_, _>>()? })
}

fn canon_set(cs: &[Contract]) -> BTreeSet<String> {
    cs.iter().map(canonical).collect()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn timed(prog: &Program, opts: Options) -> (Analysis, f64) {
    let t = Instant::now();
    let a = analyze_program(prog, opts);
    (a, t.elapsed().as_secs_f64())
}

fn oracle() -> OracleOptions {
    OracleOptions { samples: 200, max_cells: 5, loop_bound: 8, ..OracleOptions::default() }
}

fn all_inputs() -> Result<Vec<PathBuf>, String> {
    let mut files = vec![
        root().join("listings/nested.tl"),
        root().join("listings/inner_loop.tl"),
        root().join("listings/weighted_sum.tl"),
    ];
    files.extend(corpus_files(&root().join("corpus")).map_err(|e| e.to_string())?);
    Ok(files)
}

fn name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn nested_golden() -> Outcome {
    let prog = program("listings/nested.tl")?;
    let (a, secs) = timed(&prog, Options::default());
    let f = &a.summaries["nested"];
    let want = [
        contract(
            "Y = NULL ; X.data |-> l1 * Z.data |-> l3",
            &[
                "Y = NULL /\\ return = l3 ; X.data |-> l1 * Z.data |-> l3",
                "Y = NULL /\\ return = l1 ; X.data |-> l1 * Z.data |-> l3",
            ],
            &a.blocks,
        )?,
        contract(
            "Y != NULL ; X.data |-> l1 * Y.data |-> l2",
            &[
                "Y != NULL /\\ return = l2 ; X.data |-> l1 * Y.data |-> l2",
                "Y != NULL /\\ return = l1 ; X.data |-> l1 * Y.data |-> l2",
            ],
            &a.blocks,
        )?,
    ];
    ensure(f.contracts.len() == 2, || format!("{} contracts", f.contracts.len()))?;
    ensure(canon_set(&f.contracts) == canon_set(&want), || format!("got {:?}", canon_set(&f.contracts)))?;
    ensure(secs < 1.0, || format!("took {secs:.3}s"))?;
    Ok(format!("2 contracts, {secs:.3}s"))
}

fn inner_loop_golden() -> Outcome {
    let prog = program("listings/inner_loop.tl")?;
    let (a, secs) = timed(&prog, Options::default());
    let f = &a.summaries["inner_loop.loop0"];
    ensure(f.status == Status::Analyzed, || format!("{:?}", f.failure))?;
    let want = [
        contract("I != NULL ; ls(I,NULL)", &["i = NULL /\\ I != NULL ; ls(I,NULL)"], &a.blocks)?,
        contract("I = NULL ; emp", &["i = I /\\ I = NULL ; emp"], &a.blocks)?,
    ];
    ensure(canon_set(&f.contracts) == canon_set(&want), || format!("got {:?}", canon_set(&f.contracts)))?;
    ensure(f.iterations == Some(2), || format!("{:?} body analyses", f.iterations))?;
    ensure(secs < 1.0, || format!("took {secs:.3}s"))?;
    Ok(format!("2 body analyses, {secs:.3}s"))
}

fn weighted_sum() -> Outcome {
    let prog = program("listings/weighted_sum.tl")?;
    let (a, secs) = timed(&prog, Options::default());
    for f in ["weighted_sum.loop1", "weighted_sum.loop0", "weighted_sum"] {
        let s = &a.summaries[f];
        ensure(s.status == Status::Analyzed, || format!("{f}: {:?}", s.failure))?;
    }
    let entered = contract(
        "I != NULL ; O.weight |-> l1 * iter[1](I,NULL)",
        &["i = NULL /\\ sum = l2 /\\ I != NULL ; O.weight |-> l1 * iter[1](I,NULL)"],
        &a.blocks,
    )?;
    let inner = canon_set(&a.summaries["weighted_sum.loop1"].contracts);
    ensure(inner.contains(&canonical(&entered)), || format!("inner loop: {inner:?}"))?;
    let defs: Vec<String> = a.blocks.blocks().iter().map(|b| b.render_def()).collect();
    ensure(defs.iter().any(|d| d.starts_with("iter[2]") && d.contains("iter[1](")), || format!("blocks: {defs:?}"))?;
    let top = &a.summaries["weighted_sum"].contracts;
    let want = contract("true ; iter[2](O,NULL)", &[], &a.blocks)?;
    ensure(
        top.len() == 1 && canonical(&Contract { pre: top[0].pre.clone(), posts: vec![] }) == canonical(&want),
        || format!("wrapper: {:?}", canon_set(top)),
    )?;
    ensure(secs < 5.0, || format!("took {secs:.3}s"))?;
    Ok(format!("nested block shape, {secs:.3}s"))
}

fn corpus_table() -> Outcome {
    let t = Instant::now();
    let flags = Flags::default();
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for path in corpus_files(&root().join("corpus")).map_err(|e| e.to_string())? {
        let row = corpus_row(&path, &flags)?;
        ensure(row.matches, || format!("{}: {:?}", row.file, row.notes))?;
        if row.ok {
            ok.push(row.file);
        } else {
            failed.push((row.file, row.stage));
        }
    }
    for f in [
        "two_branches",
        "three_branches",
        "nested_loops",
        "nested_lists1",
        "nested_lists2",
        "even_length",
        "motivation1",
        "motivation2",
    ] {
        ensure(ok.iter().any(|g| g == f), || format!("{f} not handled"))?;
    }
    ensure(failed.iter().any(|(f, s)| f == "zip" && s.as_deref() == Some("spatial-change")), || {
        format!("failures: {failed:?}")
    })?;
    let secs = t.elapsed().as_secs_f64();
    ensure(secs < 30.0, || format!("took {secs:.1}s"))?;
    Ok(format!("{} ✓, {} ×, {secs:.1}s", ok.len(), failed.len()))
}

fn violations_under(opts: Options) -> Result<usize, String> {
    let mut n = 0;
    for path in corpus_files(&root().join("corpus")).map_err(|e| e.to_string())? {
        let prog = load(&path).map_err(|e| e.to_string())?;
        let a = analyze_program(&prog, opts);
        n += check_summaries(&prog, &a, &oracle()).values().map(|r| r.violations.len()).sum::<usize>();
    }
    Ok(n)
}

fn soundness_oracle() -> Outcome {
    let mut contracts = 0;
    for path in all_inputs()? {
        let prog = load(&path).map_err(|e| e.to_string())?;
        let a = analyze_program(&prog, Options::default());
        for (f, r) in check_summaries(&prog, &a, &oracle()) {
            ensure(r.sound(), || format!("{} {f}: {:?}", name(&path), r.violations))?;
            contracts += r.contracts;
        }
    }
    let shared = violations_under(Options { fault: Some(Fault::NoSharedLearning), ..Options::default() })?;
    let verify = violations_under(Options { fault: Some(Fault::SkipVerification), ..Options::default() })?;
    ensure(shared > 0, || "no violation with shared learning disabled".into())?;
    ensure(verify > 0, || "no violation with the verification pass skipped".into())?;
    Ok(format!("{contracts} contracts clean; faults caught ({shared} and {verify} violations)"))
}

fn property_suites() -> Outcome {
    let t = Instant::now();
    let props: [(&str, Property); 6] = [
        ("entailment", testgen::prop_entailment),
        ("biabduction", testgen::prop_biabduction),
        ("alpha", testgen::prop_alpha),
        ("frame", testgen::prop_frame),
        ("sibling worlds", testgen::prop_sibling_worlds),
        ("antiframe", testgen::prop_antiframe),
    ];
    for (label, prop) in props {
        for seed in 0..500 {
            prop(seed).map_err(|e| format!("{label} seed {seed}: {e}"))?;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1}s"))?;
    Ok(format!("6 x 500 cases, {secs:.1}s"))
}

fn extrapolation_conditions() -> Outcome {
    let mut loops = 0;
    for path in all_inputs()? {
        let prog = load(&path).map_err(|e| e.to_string())?;
        let a = analyze_program(&prog, Options::default());
        for s in a.summaries.values().filter(|s| s.kind == FnKind::Loop && s.status == Status::Analyzed) {
            let conds: BTreeSet<u8> = s.certificates.iter().map(|c| c.condition).collect();
            ensure(conds == [1, 2, 3].into(), || format!("{} {}: certificates {conds:?}", name(&path), s.name))?;
            let inv = s.invariant.as_ref().ok_or_else(|| format!("{} {}: no invariant", name(&path), s.name))?;
            let r = check_inductive(&prog, &s.name, &inv.posts[0], &oracle());
            ensure(r.sound() && r.runs > 0, || {
                format!("{} {}: {} runs, {:?}", name(&path), s.name, r.runs, r.violations)
            })?;
            loops += 1;
        }
        if let Some(s) =
            a.summaries.values().find(|s| s.failure.as_ref().is_some_and(|f| f.stage == Some(Stage::ConditionCheck)))
        {
            return Err(format!("{} {}: side condition not proved", name(&path), s.name));
        }
    }
    Ok(format!("{loops} loops certified and inductive"))
}

fn main() {
    let criteria: [(&str, Criterion); 7] = [
        ("nested golden contracts", nested_golden),
        ("inner_loop golden contract", inner_loop_golden),
        ("weighted_sum nested shapes", weighted_sum),
        ("corpus table", corpus_table),
        ("soundness oracle", soundness_oracle),
        ("property suites", property_suites),
        ("extrapolation conditions", extrapolation_conditions),
    ];
    let mut failures = 0;
    for (i, (label, run)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {label} ({detail})", i + 1),
            Err(why) => {
                failures += 1;
                println!("criterion {}: FAIL {label}: {why}", i + 1);
            }
        }
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
