use std::collections::{BTreeMap, BTreeSet};

use abducer_core::memory::{Config, Val};
use abducer_core::seplogic::*;

fn h(s: &str) -> SymHeap {
    parse_heap(s).unwrap_or_else(|e| panic!("{s}: {e}"))
}

fn v(s: &str) -> Var {
    parse::var_of_ident(s)
}

fn set(vs: &[&str]) -> BTreeSet<Var> {
    vs.iter().map(|s| v(s)).collect()
}

#[test]
fn rendering_round_trips() {
    for s in [
        "true ; emp",
        "x = l1 /\\ l1 != NULL ; l1.next |-> l2 * ls(l2,NULL)",
        "sum = l1 * l3 + SUM ; O.weight |-> l3",
        "Y = NULL ; X.data |-> l1 * Z.data |-> l3",
        "l1 <= l2 /\\ l2 < 3 ; ls(X,l2)",
    ] {
        let f = h(s);
        assert_eq!(h(&f.to_string()), f, "{s}");
    }
}

#[test]
fn subst_examples() {
    let f = h("true ; ls(l1,NULL)");
    assert_eq!(f.subst_var(&v("l2"), &v("l1")), h("true ; ls(l2,NULL)"));
    let g = h("true ; X.data |-> l5");
    assert_eq!(g.subst_var(&v("z"), &v("l5")).to_string(), "true ; X.data |-> z");
    let z = g.subst_var(&v("l5"), &v("z"));
    assert_eq!(z, h("z = l5 ; X.data |-> l5"));
    assert_eq!(g.subst_var(&v("l9"), &v("l7")), g);
}

#[test]
fn reach_examples() {
    let f = h("x = l1 ; l1.next |-> l2");
    assert_eq!(reach_set(&f, &set(&["x"])), set(&["x", "l1", "l2"]));
    assert!(reach_set(&f, &BTreeSet::new()).is_empty());
    let g = h("true ; ls(a,b) * c.next |-> d");
    assert_eq!(reach_set(&g, &set(&["a"])), set(&["a", "b"]));
}

#[test]
fn restrict_examples() {
    let f = h("true ; o.weight |-> l3 * I.next |-> l2");
    assert_eq!(restrict(&f, &set(&["o"])), h("true ; o.weight |-> l3"));
    assert_eq!(restrict(&f, &f.vars()), f);
    assert_eq!(restrict(&f, &BTreeSet::new()), SymHeap::emp());
}

#[test]
fn pure_sat_examples() {
    assert_eq!(pure_sat(&h("x = l1 /\\ l1 = 1 /\\ l1 = 2 ; emp").pure), Verdict::Unsat);
    assert_eq!(pure_sat(&h("Y = NULL /\\ Y != NULL ; emp").pure), Verdict::Unsat);
    assert_ne!(pure_sat(&h("x = y + z ; emp").pure), Verdict::Unsat);
    assert_eq!(pure_sat(&h("l1 < l2 /\\ l2 < l3 ; emp").pure), Verdict::Sat);
}

#[test]
fn models_examples() {
    let mut c = Config::default();
    assert!(models(&c, &SymHeap::emp()));
    c.stack.insert(v("x"), Val::Null);
    assert!(models(&c, &h("true ; ls(x,NULL)")));
    c.stack.insert(v("x"), Val::Loc(1));
    c.heap.insert((1, name("next")), Val::Loc(2));
    c.heap.insert((2, name("next")), Val::Null);
    assert!(models(&c, &h("true ; ls(x,NULL)")));
    assert!(!models(&c, &h("true ; x.next |-> NULL")));
    assert!(models(&c, &h("true ; x.next |-> l1 * l1.next |-> NULL")));
    // a cycle is not a segment to NULL
    c.heap.insert((2, name("next")), Val::Loc(1));
    assert!(!models(&c, &h("true ; ls(x,NULL)")));
}

#[test]
fn enumerate_examples() {
    let b = Bounds { max_cells: 2, value_range: 3 };
    let e = enumerate_models(&SymHeap::emp(), b, &[]);
    assert!(!e.is_empty() && e.iter().all(|c| c.heap.is_empty()));
    let ls = h("true ; ls(x,NULL)");
    let ms = enumerate_models(&ls, b, &[]);
    let sizes: BTreeSet<usize> = ms.iter().map(|c| c.heap.len()).collect();
    assert_eq!(sizes, BTreeSet::from([0, 1, 2]));
    assert_eq!(ms.len(), 3);
    assert!(ms.iter().all(|c| models(c, &ls)));
    assert!(enumerate_models(&h("true ; x.f |-> l1 * x.f |-> l1"), b, &[]).is_empty());
}

#[test]
fn entailment_examples() {
    let f = h("x = l1 /\\ l1 != NULL ; l1.next |-> l2 * ls(l2,NULL)");
    let e = entails(&f, &f);
    assert!(e.proved && e.frame.spatial.is_empty());
    assert!(!entails(&h("true ; ls(a,b)"), &h("true ; a.next |-> l1")).proved);
    // with the tail closed off the chain folds
    assert!(entails(&h("true ; a.next |-> b * b.next |-> NULL"), &h("true ; ls(a,NULL)")).proved);
    assert!(
        entails(&h("true ; a.next |-> b * b.next |-> c * c.next |-> NULL"), &h("true ; ls(a,c) * c.next |-> NULL"))
            .proved
    );
    // a and c may be equal: a two-cycle is not ls(a,c)
    assert!(!entails(&h("true ; a.next |-> b * b.next |-> c"), &h("true ; ls(a,c)")).proved);
    assert!(entails(&h("a != NULL ; ls(a,NULL)"), &h("true ; a.next |-> l1 * ls(l1,NULL)")).proved);
    assert!(entails(&h("true ; ls(a,b) * ls(b,NULL)"), &h("true ; ls(a,NULL)")).proved);
}

#[test]
fn alpha_examples() {
    assert_eq!(abstract_alpha(&SymHeap::emp()), SymHeap::emp());
    let f = h("true ; a.next |-> l1 * l1.data |-> c");
    assert_eq!(abstract_alpha(&f), f);
    let g = h("true ; a.next |-> l1 * l1.next |-> NULL");
    assert_eq!(abstract_alpha(&g), h("true ; ls(a,NULL)"));
    let k = h("true ; a.next |-> l1 * l1.next |-> l2 * l2.next |-> c * c.next |-> NULL");
    assert_eq!(abstract_alpha(&k), h("true ; ls(a,c) * c.next |-> NULL"));
}

#[test]
fn abduction_example() {
    let q = h("x = X /\\ y = Y /\\ z = Z ; emp");
    let l = h("true ; X.data |-> l1");
    let mut fresh = Fresh::above(&q.star(&l));
    let ex: BTreeSet<Var> = [v("l1")].into();
    let a = abduce(&q, &l, &ex, &mut fresh).expect("abduction");
    assert_eq!(a.missing.to_string(), "true ; X.data |-> l1");
    let q2 = h("true ; a.next |-> b");
    let l2 = h("true ; a.next |-> c");
    let a2 = abduce(&q2, &l2, &BTreeSet::new(), &mut Fresh::above(&q2)).expect("abduction");
    assert_eq!(a2.missing.to_string(), "b = c ; emp");
    let _ = BTreeMap::<u8, u8>::new();
}
