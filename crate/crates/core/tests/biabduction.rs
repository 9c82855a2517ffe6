use std::collections::BTreeSet;

use abducer_core::biabduction::*;
use abducer_core::frontend::cfg_text::parse_stmt;
use abducer_core::frontend::{compile, Stmt};
use abducer_core::seplogic::*;
use abducer_core::testgen::{prop_antiframe, prop_biabduction};

fn h(s: &str) -> SymHeap {
    parse_heap(s).unwrap_or_else(|e| panic!("{s}: {e}"))
}

fn st(s: &str) -> Stmt {
    parse_stmt(s, 1).unwrap()
}

fn anchors(xs: &[&str]) -> BTreeSet<Var> {
    xs.iter().map(|x| Var::anchor(x)).collect()
}

/// Equal up to renaming of plain logicals.
fn same(a: &SymHeap, b: &SymHeap) -> bool {
    let c = |x: &SymHeap| canonical(&Contract { pre: x.clone(), posts: vec![] });
    c(a) == c(b)
}

/// Each entails the other, logicals private to one side being existential.
fn equivalent(a: &SymHeap, b: &SymHeap) -> bool {
    let one = |l: &SymHeap, r: &SymHeap| {
        let e = entails(l, r);
        e.proved && e.frame.spatial.is_empty()
    };
    one(a, b) && one(b, a)
}

fn learn_from_entry(stmt: &str, state: &str) -> Result<Learned, LearnFailure> {
    let mut fresh = Fresh::new();
    let q = h(state);
    fresh.bump_past(&q);
    let d = atomic_contract(&st(stmt), &mut fresh).unwrap();
    learn(&h("true ; emp"), &q, &d, &anchors(&["x", "y"]), true, &mut fresh)
}

#[test]
fn load_demands_the_cell() {
    let l = learn_from_entry("y = x->next", "x = X /\\ y = Y ; emp").unwrap();
    assert!(same(&l.missing, &h("true ; X.next |-> l1")), "{}", l.missing);
    assert_eq!(l.posts.len(), 1);
    assert!(same(&l.posts[0], &h("x = X /\\ y = l1 ; X.next |-> l1")), "{}", l.posts[0]);
}

#[test]
fn store_overwrites_the_cell() {
    let l = learn_from_entry("x->data = y", "x = X /\\ y = Y ; X.data |-> l7").unwrap();
    assert!(same(&l.missing, &h("true ; emp")));
    assert!(same(&l.posts[0], &h("x = X /\\ y = Y ; X.data |-> Y")), "{}", l.posts[0]);
}

#[test]
fn assert_learns_its_condition() {
    let l = learn_from_entry("assert(x != NULL)", "x = X /\\ y = Y ; emp").unwrap();
    assert!(same(&l.missing, &h("X != NULL ; emp")), "{}", l.missing);
}

#[test]
fn assume_learns_nothing() {
    let l = learn_from_entry("assume(x == y)", "x = X /\\ y = Y ; emp").unwrap();
    assert!(same(&l.missing, &h("true ; emp")));
    assert!(same(&l.posts[0], &h("x = X /\\ y = Y /\\ X = Y ; emp")), "{}", l.posts[0]);
}

#[test]
fn contradicted_assume_leaves_no_post() {
    let l = learn_from_entry("assume(x == y)", "x = X /\\ y = Y /\\ X != Y ; emp").unwrap();
    assert!(l.posts.is_empty());
}

#[test]
fn nondeterministic_values_cannot_be_learned_about() {
    let e = learn_from_entry("y = x->next", "x = l5 /\\ y = Y ; emp").unwrap_err();
    assert!(matches!(e, LearnFailure::Unreachable(_)), "{e:?}");
}

#[test]
fn disabled_learning_reports_what_was_missing() {
    let mut fresh = Fresh::new();
    let q = h("x = X /\\ y = Y ; emp");
    fresh.bump_past(&q);
    let d = atomic_contract(&st("y = x->next"), &mut fresh).unwrap();
    match learn(&h("true ; emp"), &q, &d, &anchors(&["x", "y"]), false, &mut fresh) {
        Err(LearnFailure::LearningDisabled(m)) => assert!(m.contains("X.next"), "{m}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn contradictory_requirement_is_refused() {
    let e = learn_from_entry("assert(x != NULL)", "x = X /\\ X = NULL ; emp").unwrap_err();
    assert!(matches!(e, LearnFailure::NoMatch | LearnFailure::Unsat), "{e:?}");
}

#[test]
fn conditions_are_rewritten_through_bindings() {
    let q = h("x = X /\\ y = l3 ; X.next |-> l3");
    let c = Pure::ne(Expr::Var(Var::prog("y")), Expr::Null);
    assert_eq!(rewrite_cond(&q, &c), Pure::ne(Expr::Var(Var::Logical(3)), Expr::Null));
    assert_eq!(binding(&q, &Var::prog("x")), Some(Expr::Var(Var::anchor("x"))));
    assert_eq!(binding(&q, &Var::prog("z")), None);
}

#[test]
fn projection_keeps_only_the_given_program_variables() {
    let q = h("x = X /\\ t = l1 ; X.next |-> l1");
    let keep: BTreeSet<Var> = [Var::prog("x")].into();
    assert_eq!(project(&q, &keep), h("x = X ; X.next |-> l1"));
}

#[test]
fn call_sites_instantiate_callee_contracts() {
    let prog = compile("void copy(dest, src) { d = src->data; dest->data = d; }").unwrap();
    let callee = prog.get("copy").unwrap();
    let c = Contract {
        pre: h("true ; DEST.data |-> l1 * SRC.data |-> l2"),
        posts: vec![h("return = NULL ; DEST.data |-> l2 * SRC.data |-> l2")],
    };
    let mut fresh = Fresh::new();
    let call = Stmt::Call { dst: name("r"), callee: name("copy"), args: vec![name("out"), name("hd")] };
    let d = call_demand(&c, callee, &call, &mut fresh);
    let q = h("out = OUT /\\ hd = HD /\\ r = NULL ; emp");
    fresh.bump_past(&q);
    let l = learn(&h("true ; emp"), &q, &d, &anchors(&["out", "hd"]), true, &mut fresh).unwrap();
    assert!(same(&l.missing, &h("true ; OUT.data |-> l1 * HD.data |-> l2")), "{}", l.missing);
    assert_eq!(l.posts.len(), 1);
    let expected = h("out = OUT /\\ hd = HD /\\ r = NULL ; OUT.data |-> l2 * HD.data |-> l2");
    assert!(equivalent(&l.posts[0], &expected), "{}", l.posts[0]);
}

#[test]
fn canonical_form_ignores_logical_names_and_order() {
    let a = Contract {
        pre: h("true ; X.data |-> l4 * Y.data |-> l9"),
        posts: vec![h("return = l9 ; X.data |-> l4 * Y.data |-> l9")],
    };
    let b = Contract {
        pre: h("true ; Y.data |-> l1 * X.data |-> l2"),
        posts: vec![h("return = l1 ; X.data |-> l2 * Y.data |-> l1")],
    };
    assert_eq!(canonical(&a), canonical(&b));
    let c = Contract { pre: b.pre.clone(), posts: vec![h("return = l2 ; X.data |-> l2 * Y.data |-> l1")] };
    assert_ne!(canonical(&a), canonical(&c));
}

#[test]
fn simplification_drops_ground_truths() {
    let c = Contract { pre: h("0 != 1 ; X.next |-> l1"), posts: vec![h("x = l1 /\\ 0 != 1 ; X.next |-> l1")] };
    let s = simplify_contract(&c);
    assert!(same(&s.pre, &h("true ; X.next |-> l1")), "{}", s.pre);
}

#[test]
fn abduction_is_semantically_correct() {
    for seed in 0..500 {
        prop_biabduction(seed).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
    }
}

#[test]
fn antiframes_mention_no_program_variables() {
    for seed in 0..500 {
        prop_antiframe(seed).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
    }
}
