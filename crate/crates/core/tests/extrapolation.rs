use std::collections::BTreeSet;

use abducer_core::biabduction::{canonical, Contract};
use abducer_core::engine::*;
use abducer_core::extrapolation::exit_condition;
use abducer_core::frontend::{compile, FnKind, Program};
use abducer_core::interpreter::{check_contract, check_inductive, OracleOptions};
use abducer_core::seplogic::{parse_heap_with, BlockTable, SymHeap};

fn load(path: &str) -> Program {
    let full = format!("{}/../../{path}", env!("CARGO_MANIFEST_DIR"));
    compile(&std::fs::read_to_string(&full).unwrap_or_else(|e| panic!("{full}: {e}"))).unwrap()
}

fn h(s: &str, blocks: &BlockTable) -> SymHeap {
    parse_heap_with(s, blocks.blocks()).unwrap_or_else(|e| panic!("{s}: {e}"))
}

fn contract(pre: &str, posts: &[&str], blocks: &BlockTable) -> Contract {
    Contract { pre: h(pre, blocks), posts: posts.iter().map(|q| h(q, blocks)).collect() }
}

fn canon_set(cs: &[Contract]) -> BTreeSet<String> {
    cs.iter().map(canonical).collect()
}

fn oracle() -> OracleOptions {
    OracleOptions { samples: 200, max_cells: 5, loop_bound: 8, ..OracleOptions::default() }
}

#[test]
fn inner_loop_final_contracts() {
    let prog = load("listings/inner_loop.tl");
    let a = analyze_program(&prog, Options::default());
    let f = &a.summaries["inner_loop.loop0"];
    assert_eq!(f.status, Status::Analyzed, "{:?}", f.failure);
    assert_eq!(f.iterations, Some(2));
    let want = [
        contract("I != NULL ; ls(I,NULL)", &["i = NULL /\\ I != NULL ; ls(I,NULL)"], &a.blocks),
        contract("I = NULL ; emp", &["i = I /\\ I = NULL ; emp"], &a.blocks),
    ];
    assert_eq!(canon_set(&f.contracts), canon_set(&want));
    let top = &a.summaries["inner_loop"];
    assert_eq!(
        canon_set(&top.contracts),
        canon_set(&[contract("true ; ls(I,NULL)", &["return = NULL ; ls(I,NULL)"], &a.blocks)])
    );
}

#[test]
fn inner_loop_exit_is_the_loop_condition() {
    let prog = load("listings/inner_loop.tl");
    let ex = exit_condition(prog.get("inner_loop.loop0").unwrap()).unwrap();
    assert_eq!(ex.len(), 1);
    assert_eq!(&*ex[0].var, "i");
    assert_eq!(ex[0].target_expr().to_string(), "NULL");
}

#[test]
fn weighted_sum_nests_the_inner_segment() {
    let prog = load("listings/weighted_sum.tl");
    let a = analyze_program(&prog, Options::default());
    for f in ["weighted_sum.loop1", "weighted_sum.loop0", "weighted_sum"] {
        assert_eq!(a.summaries[f].status, Status::Analyzed, "{f}: {:?}", a.summaries[f].failure);
    }
    let defs: Vec<String> = a.blocks.blocks().iter().map(|b| b.render_def()).collect();
    let outer = defs.iter().find(|d| d.starts_with("iter[2]")).expect("outer block");
    assert!(outer.contains("iter[1]("), "{outer}");

    // the inner loop overwrites sum with an unknown value
    let inner = &a.summaries["weighted_sum.loop1"];
    let entered = contract(
        "I != NULL ; O.weight |-> l1 * iter[1](I,NULL)",
        &["i = NULL /\\ sum = l2 /\\ I != NULL ; O.weight |-> l1 * iter[1](I,NULL)"],
        &a.blocks,
    );
    assert!(canon_set(&inner.contracts).contains(&canonical(&entered)), "{:?}", canon_set(&inner.contracts));

    let top = &a.summaries["weighted_sum"];
    assert_eq!(top.contracts.len(), 1);
    assert_eq!(
        canonical(&Contract { pre: top.contracts[0].pre.clone(), posts: vec![] }),
        canonical(&contract("true ; iter[2](O,NULL)", &[], &a.blocks))
    );
}

#[test]
fn zip_fails_when_the_body_rewires_cells() {
    let a = analyze_program(&load("corpus/zip.tl"), Options::default());
    let f = &a.summaries["zip.loop0"];
    assert_eq!(f.status, Status::Failed);
    assert_eq!(f.failure.as_ref().unwrap().stage, Some(Stage::SpatialChange));
    assert!(a.summaries["zip"].failure.as_ref().unwrap().reason.contains("could not be analyzed"));
}

#[test]
fn bounded_walk_fails_verification() {
    let prog = load("corpus/bounded_walk.tl");
    let a = analyze_program(&prog, Options::default());
    let f = &a.summaries["bounded_walk.loop0"];
    assert_eq!(f.status, Status::Failed);
    assert_eq!(f.failure.as_ref().unwrap().stage, Some(Stage::Verification));
    assert_eq!(f.iterations, Some(2));
}

#[test]
fn skipping_verification_admits_an_unsound_invariant() {
    let prog = load("corpus/bounded_walk.tl");
    let opts = Options { fault: Some(Fault::SkipVerification), ..Options::default() };
    let a = analyze_program(&prog, opts);
    let f = &a.summaries["bounded_walk.loop0"];
    assert_eq!(f.status, Status::Analyzed);
    assert_eq!(f.iterations, Some(1));
    let inv = f.invariant.as_ref().unwrap();
    assert!(!check_inductive(&prog, "bounded_walk.loop0", &inv.posts[0], &oracle()).sound());
    let c = check_contract(&prog, "bounded_walk.loop0", &f.contracts, &oracle());
    assert!(c.violations.iter().any(|v| v.reason.contains("n > 0")), "{:?}", c.violations);
}

fn analyzed_loops() -> Vec<(String, Program, Analysis)> {
    let mut out = Vec::new();
    let mut files: Vec<String> = ["listings/inner_loop.tl", "listings/weighted_sum.tl"].map(String::from).to_vec();
    let dir = format!("{}/../../corpus", env!("CARGO_MANIFEST_DIR"));
    let mut corpus: Vec<String> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "tl"))
        .map(|p| format!("corpus/{}", p.file_name().unwrap().to_string_lossy()))
        .collect();
    corpus.sort();
    files.extend(corpus);
    for file in files {
        let prog = load(&file);
        let a = analyze_program(&prog, Options::default());
        out.push((file, prog, a));
    }
    out
}

#[test]
fn analyzed_loops_carry_all_three_certificates() {
    let mut seen = 0;
    for (file, _, a) in analyzed_loops() {
        for s in a.summaries.values().filter(|s| s.kind == FnKind::Loop && s.status == Status::Analyzed) {
            let conds: BTreeSet<u8> = s.certificates.iter().map(|c| c.condition).collect();
            assert_eq!(conds, [1, 2, 3].into(), "{file} {}", s.name);
            for c in &s.certificates {
                assert!(
                    c.method == "entailment" || c.method == "empty-segment lemma",
                    "{file} {}: {}",
                    s.name,
                    c.method
                );
            }
            assert_eq!(s.iterations, Some(2), "{file} {}", s.name);
            seen += 1;
        }
    }
    assert!(seen >= 5, "only {seen} loops analyzed");
}

#[test]
fn loop_invariants_are_inductive() {
    for (file, prog, a) in analyzed_loops() {
        for s in a.summaries.values().filter(|s| s.kind == FnKind::Loop && s.status == Status::Analyzed) {
            let inv = s.invariant.as_ref().unwrap_or_else(|| panic!("{file} {}: no invariant", s.name));
            let r = check_inductive(&prog, &s.name, &inv.posts[0], &oracle());
            assert!(r.sound(), "{file} {}: {:?}", s.name, r.violations);
            assert!(r.runs > 0, "{file} {}: no runs", s.name);
        }
    }
}

#[test]
fn loop_contracts_pass_the_oracle() {
    for (file, prog, a) in analyzed_loops() {
        for s in a.summaries.values().filter(|s| s.status == Status::Analyzed) {
            let r = check_contract(&prog, &s.name, &s.contracts, &oracle());
            assert!(r.sound(), "{file} {}: {:?}", s.name, r.violations);
        }
    }
}
