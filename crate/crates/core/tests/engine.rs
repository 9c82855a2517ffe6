use std::collections::BTreeSet;

use abducer_core::biabduction::{canonical, Contract};
use abducer_core::engine::*;
use abducer_core::frontend::{compile, Program};
use abducer_core::interpreter::{check_contract, OracleOptions};
use abducer_core::seplogic::{parse_heap, Fresh, Spatial, SymHeap, Var};
use abducer_core::testgen::{prop_random_program_sound, prop_sibling_worlds};

fn load(path: &str) -> Program {
    let full = format!("{}/../../{path}", env!("CARGO_MANIFEST_DIR"));
    compile(&std::fs::read_to_string(&full).unwrap_or_else(|e| panic!("{full}: {e}"))).unwrap()
}

fn h(s: &str) -> SymHeap {
    parse_heap(s).unwrap_or_else(|e| panic!("{s}: {e}"))
}

fn analyze(prog: &Program) -> Summaries {
    analyze_program(prog, Options::default()).summaries
}

fn summary<'a>(s: &'a Summaries, f: &str) -> &'a FunctionSummary {
    s.get(f).unwrap_or_else(|| panic!("no summary for {f}"))
}

fn cells(h: &SymHeap) -> BTreeSet<String> {
    h.spatial
        .iter()
        .filter_map(|a| match a {
            Spatial::PointsTo { src, field, .. } => Some(format!("{src}.{field}")),
            _ => None,
        })
        .collect()
}

fn set(xs: &[&str]) -> BTreeSet<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn oracle() -> OracleOptions {
    OracleOptions { samples: 200, max_cells: 5, loop_bound: 8, ..OracleOptions::default() }
}

#[test]
fn nested_gets_the_two_published_contracts() {
    let prog = load("listings/nested.tl");
    let t = std::time::Instant::now();
    let s = analyze(&prog);
    assert!(t.elapsed().as_secs_f64() < 1.0);
    let f = summary(&s, "nested");
    assert_eq!(f.status, Status::Analyzed);
    let expected = [
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
    ];
    let want: BTreeSet<String> = expected.iter().map(canonical).collect();
    let got: BTreeSet<String> = f.contracts.iter().map(canonical).collect();
    assert_eq!(got, want);
}

#[test]
fn shared_learning_keeps_every_required_cell() {
    let prog = load("corpus/motivation1.tl");
    let s = analyze(&prog);
    let f = summary(&s, "user_choice");
    assert_eq!(f.status, Status::Analyzed);
    assert_eq!(f.contracts.len(), 2);
    for c in &f.contracts {
        let have = cells(&c.pre);
        assert!(have.is_superset(&set(&["HD.data", "OUT.data", "LAST.data"])), "{}", c.pre);
        if c.pre.pure.iter().any(|p| p.to_string() == "CURRENT != HD") {
            assert!(have.contains("CURRENT.data"), "{}", c.pre);
        }
    }
    let r = check_contract(&prog, "user_choice", &f.contracts, &oracle());
    assert!(r.sound(), "{:?}", r.violations);
}

#[test]
fn unanchored_branches_share_one_precondition() {
    let prog = load("corpus/two_branches.tl");
    let s = analyze(&prog);
    let f = summary(&s, "two_branches");
    assert_eq!(f.contracts.len(), 1);
    assert_eq!(cells(&f.contracts[0].pre), set(&["X.data", "Y.data"]));
    assert_eq!(f.contracts[0].posts.len(), 2);

    let prog = load("corpus/three_branches.tl");
    let s = analyze(&prog);
    let f = summary(&s, "three_branches");
    assert_eq!(f.contracts.len(), 1);
    assert_eq!(cells(&f.contracts[0].pre), set(&["X.data", "Y.data", "Z.data"]));
}

#[test]
fn copying_worlds_instead_of_sharing_is_unsound() {
    let prog = load("corpus/two_branches.tl");
    let opts = Options { fault: Some(Fault::NoSharedLearning), ..Options::default() };
    let s = analyze_program(&prog, opts).summaries;
    let f = summary(&s, "two_branches");
    assert_eq!(f.contracts.len(), 2);
    assert!(f.contracts.iter().all(|c| cells(&c.pre).len() == 1));
    let r = check_contract(&prog, "two_branches", &f.contracts, &oracle());
    assert!(!r.sound());
}

#[test]
fn world_count_is_bounded() {
    let mut src = String::from("int f(a, b, c, d, e, g, k) {\n");
    for p in ["a", "b", "c", "d", "e", "g", "k"] {
        src.push_str(&format!("    if ({p} == NULL) {{ r = 1; }} else {{ r = 2; }}\n"));
    }
    src.push_str("    return r;\n}\n");
    let prog = compile(&src).unwrap();
    let f = analyze(&prog).remove("f").unwrap();
    assert_eq!(f.status, Status::Failed);
    assert!(f.failure.unwrap().reason.contains("world explosion"));
    let opts = Options { max_worlds: 200, ..Options::default() };
    let f = analyze_program(&prog, opts).summaries.remove("f").unwrap();
    assert_eq!(f.status, Status::Analyzed);
    assert_eq!(f.contracts.len(), 128);
}

#[test]
fn step_count_is_bounded() {
    let prog = load("listings/nested.tl");
    let opts = Options { max_steps: 3, ..Options::default() };
    let f = analyze_program(&prog, opts).summaries.remove("nested").unwrap();
    assert_eq!(f.status, Status::Failed);
    assert!(f.failure.unwrap().reason.contains("resource limit"));
}

#[test]
fn certain_crash_fails_the_function() {
    let prog = compile("int f(x) { x = NULL; r = x->data; return r; }").unwrap();
    let f = analyze(&prog).remove("f").unwrap();
    assert_eq!(f.status, Status::Failed);
    assert!(f.contracts.is_empty());
}

#[test]
fn callers_of_failed_functions_fail() {
    let prog = compile("int g(x) { x = NULL; r = x->data; return r; }\nint f(y) { r = g(y); return r; }").unwrap();
    let f = analyze(&prog).remove("f").unwrap();
    assert_eq!(f.status, Status::Failed);
    assert!(f.failure.unwrap().reason.contains("could not be analyzed"));
}

#[test]
fn callee_contracts_are_applied_at_call_sites() {
    let prog = compile("int g(x) { r = x->next; return r; }\nint f(y) { a = g(y); b = g(a); return b; }").unwrap();
    let s = analyze(&prog);
    let f = summary(&s, "f");
    assert_eq!(f.status, Status::Analyzed);
    assert_eq!(f.contracts.len(), 1);
    assert_eq!(f.contracts[0].pre.spatial.len(), 2, "{}", f.contracts[0].pre);
    let r = check_contract(&prog, "f", &f.contracts, &oracle());
    assert!(r.sound(), "{:?}", r.violations);
}

#[test]
fn trace_lines_name_world_post_location_and_learned_part() {
    let prog = load("corpus/two_branches.tl");
    let opts = Options { trace: true, ..Options::default() };
    let s = analyze_program(&prog, opts).summaries;
    let f = summary(&s, "two_branches");
    assert!(!f.trace.is_empty());
    for line in &f.trace {
        let parts: Vec<&str> = line.splitn(5, ' ').collect();
        assert!(
            parts[0].starts_with("world#") && parts[1].starts_with("post#") && parts[2].starts_with("loc="),
            "{line}"
        );
        assert!(line.contains(" stmt=") && line.contains(" M="), "{line}");
    }
    assert!(f.trace.iter().any(|l| l.contains("M=true ; X.data |-> ")));
}

#[test]
fn analysis_is_deterministic() {
    let prog = load("corpus/motivation1.tl");
    let a: Vec<String> = analyze(&prog).values().flat_map(|s| s.contracts.iter().map(|c| c.to_string())).collect();
    let b: Vec<String> = analyze(&prog).values().flat_map(|s| s.contracts.iter().map(|c| c.to_string())).collect();
    assert_eq!(a, b);
}

#[test]
fn initial_state_binds_parameters_to_anchors() {
    let prog = compile("int f(x, y) { t = x; return t; }").unwrap();
    let q = initial_state(prog.get("f").unwrap(), &mut Fresh::new());
    // normalized: program variables are bound to anchors or logicals only
    let want = h("x = X /\\ y = Y /\\ t = l1 /\\ return = l2 /\\ l1 = NULL /\\ l2 = NULL ; emp");
    let c = |h: &SymHeap| canonical(&Contract { pre: h.clone(), posts: vec![] });
    assert_eq!(c(&q), c(&want));
    assert_eq!(param_anchors(prog.get("f").unwrap()), [Var::anchor("x"), Var::anchor("y")].into());
}

#[test]
fn sibling_world_preconditions_are_incompatible() {
    for seed in 0..500 {
        prop_sibling_worlds(seed).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
    }
}

#[test]
fn random_loop_free_functions_get_sound_contracts() {
    for seed in 0..300 {
        prop_random_program_sound(seed).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
    }
}
