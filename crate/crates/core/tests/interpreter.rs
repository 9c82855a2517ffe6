use std::collections::BTreeMap;

use abducer_core::biabduction::{atomic_contract, Contract};
use abducer_core::frontend::{compile, Program};
use abducer_core::interpreter::*;
use abducer_core::memory::{Config, Heap, Val};
use abducer_core::seplogic::{enumerate_models, models, name, parse_heap, Bounds, Fresh, Name, SymHeap, Var};
use abducer_core::testgen::{random_config, random_stmt};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn listing(file: &str) -> Program {
    let path = format!("{}/../../listings/{file}", env!("CARGO_MANIFEST_DIR"));
    compile(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

fn h(s: &str) -> SymHeap {
    parse_heap(s).unwrap_or_else(|e| panic!("{s}: {e}"))
}

fn cell(heap: &mut Heap, l: u32, f: &str, v: Val) {
    heap.insert((l, name(f)), v);
}

/// A NULL-terminated `next` list on locations 1..=n.
fn list(n: u32) -> Heap {
    let mut heap = Heap::new();
    for l in 1..=n {
        cell(&mut heap, l, "next", if l == n { Val::Null } else { Val::Loc(l + 1) });
    }
    heap
}

fn stack(vs: &[(&str, Val)]) -> Config {
    Config { stack: vs.iter().map(|(x, v)| (Var::prog(x), *v)).collect(), heap: Heap::new() }
}

fn stmt(s: &str) -> abducer_core::frontend::Stmt {
    abducer_core::frontend::cfg_text::parse_stmt(s, 1).unwrap()
}

fn empty() -> Program {
    Program::default()
}

#[test]
fn load_from_unallocated_cell_errs() {
    let c = stack(&[("x", Val::Loc(1)), ("y", Val::Null)]);
    assert!(exec_stmt(&empty(), &c, &stmt("y = x->next"), Limits::default()).is_err());
}

#[test]
fn false_assume_has_no_successor() {
    let c = stack(&[("x", Val::Int(1))]);
    assert_eq!(exec_stmt(&empty(), &c, &stmt("assume(x == 0)"), Limits::default()).unwrap(), vec![]);
}

#[test]
fn constant_assignment_updates_only_the_stack() {
    let mut c = stack(&[("x", Val::Null)]);
    cell(&mut c.heap, 1, "data", Val::Int(3));
    let out = exec_stmt(&empty(), &c, &stmt("x = 5"), Limits::default()).unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].stack[&Var::prog("x")], Val::Int(5));
    assert_eq!(out[0].heap, c.heap);
}

#[test]
fn inner_loop_walks_a_short_list() {
    let p = listing("inner_loop.tl");
    let r = run_function(&p, "inner_loop.loop0", &[Val::Loc(1)], list(2), Limits::default());
    assert!(r.err.is_none());
    assert!(!r.bound_hit);
    assert_eq!(r.finals.len(), 1);
    assert_eq!(r.finals[0].stack[&Var::prog("i")], Val::Null);
}

#[test]
fn long_list_hits_the_loop_bound() {
    let p = listing("inner_loop.tl");
    let r =
        run_function(&p, "inner_loop.loop0", &[Val::Loc(1)], list(9), Limits { loop_bound: 8, ..Limits::default() });
    assert!(r.bound_hit);
    assert!(r.finals.is_empty());
}

#[test]
fn failing_assert_errs() {
    let p = compile("void f(x) { assert(x != x); }").unwrap();
    let r = run_function(&p, "f", &[Val::Int(0)], Heap::new(), Limits::default());
    assert!(r.err.is_some());
}

#[test]
fn error_wins_over_other_paths() {
    let p = compile("int f(x) { if (?) { r = 1; } else { r = x->data; } return r; }").unwrap();
    let r = run_function(&p, "f", &[Val::Null], Heap::new(), Limits::default());
    assert!(r.err.is_some());
}

#[test]
fn nested_runs_every_path() {
    let p = listing("nested.tl");
    let mut heap = Heap::new();
    cell(&mut heap, 1, "data", Val::Int(10));
    cell(&mut heap, 2, "data", Val::Int(20));
    cell(&mut heap, 3, "data", Val::Int(30));
    let ret = |r: &RunResult| -> Vec<Val> {
        let mut v: Vec<Val> = r.finals.iter().map(|c| c.stack[&Var::prog("return")]).collect();
        v.sort();
        // the `?` temporary differs between finals on the same path
        v.dedup();
        v
    };
    // y set: read through x or y
    let r = run_function(&p, "nested", &[Val::Loc(1), Val::Loc(2), Val::Loc(3)], heap.clone(), Limits::default());
    assert_eq!(ret(&r), vec![Val::Int(10), Val::Int(20)]);
    // y NULL: read through x or z
    let r = run_function(&p, "nested", &[Val::Loc(1), Val::Null, Val::Loc(3)], heap.clone(), Limits::default());
    assert_eq!(ret(&r), vec![Val::Int(10), Val::Int(30)]);
    // z dangling on the y = NULL path
    heap.remove(&(3, name("data")));
    let r = run_function(&p, "nested", &[Val::Loc(1), Val::Null, Val::Loc(3)], heap, Limits::default());
    assert!(r.err.is_some());
}

fn nested_contracts() -> Vec<Contract> {
    vec![
        Contract {
            pre: h("Y = NULL ; X.data |-> l1 * Z.data |-> l3"),
            posts: vec![
                h("Y = NULL /\\ return = l3 ; X.data |-> l1 * Z.data |-> l3"),
                h("Y = NULL /\\ return = l1 ; X.data |-> l1 * Z.data |-> l3"),
            ],
        },
        Contract {
            pre: h("Y != NULL ; X.data |-> l1 * Y.data |-> l2"),
            posts: vec![
                h("Y != NULL /\\ return = l2 ; X.data |-> l1 * Y.data |-> l2"),
                h("Y != NULL /\\ return = l1 ; X.data |-> l1 * Y.data |-> l2"),
            ],
        },
    ]
}

fn oracle_opts() -> OracleOptions {
    OracleOptions { samples: 200, max_cells: 5, loop_bound: 8, ..OracleOptions::default() }
}

#[test]
fn published_nested_contracts_pass_the_oracle() {
    let p = listing("nested.tl");
    let r = check_contract(&p, "nested", &nested_contracts(), &oracle_opts());
    assert!(r.sound(), "{:?}", r.violations);
    assert!(r.runs > 0);
    assert_eq!(r.vacuous, 0);
}

#[test]
fn dropping_a_required_cell_is_caught() {
    let p = listing("nested.tl");
    let mut cs = nested_contracts();
    cs[0].pre = h("Y = NULL ; X.data |-> l1");
    let r = check_contract(&p, "nested", &cs, &oracle_opts());
    assert!(!r.violations.is_empty());
    assert!(r.violations.iter().all(|v| v.contract == 0));
}

#[test]
fn wrong_post_is_caught() {
    let p = listing("nested.tl");
    let mut cs = nested_contracts();
    cs[1].posts.pop();
    let r = check_contract(&p, "nested", &cs, &oracle_opts());
    assert!(r.violations.iter().any(|v| v.reason.contains("satisfies no post")));
}

#[test]
fn unsatisfiable_pre_is_vacuous() {
    let p = listing("nested.tl");
    let c = Contract { pre: h("X != X ; emp"), posts: vec![h("true ; emp")] };
    let r = check_contract(&p, "nested", &[c], &oracle_opts());
    assert_eq!(r.vacuous, 1);
    assert_eq!(r.runs, 0);
    assert!(r.sound());
}

#[test]
fn oracle_is_reproducible_for_a_seed() {
    let p = listing("nested.tl");
    let mut cs = nested_contracts();
    cs[0].pre = h("Y = NULL ; X.data |-> l1");
    let opts = OracleOptions { samples: 5, seed: 7, ..oracle_opts() };
    let a = check_contract(&p, "nested", &cs, &opts);
    let b = check_contract(&p, "nested", &cs, &opts);
    assert_eq!(fingerprint(&a), fingerprint(&b));
}

fn fingerprint(r: &SoundnessReport) -> String {
    format!("{} {} {:?}", r.runs, r.inconclusive, r.violations.iter().map(|v| &v.model).collect::<Vec<_>>())
}

#[test]
fn one_pass_stops_at_the_head() {
    let p = listing("inner_loop.tl");
    let f = p.get("inner_loop.loop0").unwrap();
    let mut init = Interpreter::frame(f, &[Val::Loc(1)], list(3));
    init.stack.insert(Var::prog("i"), Val::Loc(2));
    let pass = Interpreter::new(&p, Limits::default()).body_pass(f, init);
    assert!(pass.err.is_none());
    assert!(pass.exited.is_empty());
    assert_eq!(pass.repeated.len(), 1);
    assert_eq!(pass.repeated[0].stack[&Var::prog("i")], Val::Loc(3));
}

#[test]
fn list_invariant_is_inductive_but_a_wrong_one_is_not() {
    let p = listing("inner_loop.tl");
    let opts = OracleOptions { samples: 200, max_cells: 5, ..OracleOptions::default() };
    let r = check_inductive(&p, "inner_loop.loop0", &h("i = l6 ; ls(I,l6) * ls(l6,NULL)"), &opts);
    assert!(r.sound(), "{:?}", r.violations);
    assert!(r.runs > 0);
    let r = check_inductive(&p, "inner_loop.loop0", &h("i = I ; ls(I,NULL)"), &opts);
    assert!(!r.sound());
}

fn vars() -> Vec<Name> {
    ["x", "y", "z"].iter().map(|s| name(s)).collect()
}

#[test]
fn statements_without_nondeterminism_are_deterministic() {
    for seed in 0..500 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let st = random_stmt(&mut rng, &vars());
        let c = random_config(&mut rng, &vars(), 3);
        if let Ok(out) = exec_stmt(&empty(), &c, &st, Limits::default()) {
            assert!(out.len() <= 1, "{st}: {out:?}");
        }
    }
}

#[test]
fn frame_property_of_statements() {
    for seed in 0..500 {
        abducer_core::testgen::prop_frame(seed).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
    }
}

/// Every bounded model of a statement's precondition runs to a model of
/// one of its posts, with the pattern variables keeping their values.
#[test]
fn statement_contracts_agree_with_execution() {
    let mut checked = 0;
    for seed in 0..500 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let st = random_stmt(&mut rng, &vars());
        let mut fresh = Fresh::new();
        let Some(d) = atomic_contract(&st, &mut fresh) else { continue };
        let progs: Vec<Var> = vars().into_iter().map(Var::Prog).collect();
        let ms = enumerate_models(&d.pre, Bounds { max_cells: 3, value_range: 1 }, &progs);
        for m in ms.into_iter().take(20) {
            let conf = Config {
                stack: m.stack.iter().filter(|(v, _)| v.is_prog()).map(|(v, x)| (v.clone(), *x)).collect(),
                heap: m.heap.clone(),
            };
            let out = exec_stmt(&empty(), &conf, &st, Limits::default())
                .unwrap_or_else(|e| panic!("{st} errs on a model of its pre {m}: {e}"));
            for c in out {
                let mut s: BTreeMap<Var, Val> = c.stack.clone();
                for (v, x) in &m.stack {
                    if !v.is_prog() {
                        s.insert(v.clone(), *x);
                    }
                }
                let view = Config { stack: s, heap: c.heap.clone() };
                assert!(d.posts.iter().any(|q| models(&view, q)), "{st}: {view} models no post of {}", d.pre);
                checked += 1;
            }
        }
    }
    assert!(checked > 500, "only {checked} runs checked");
}
