use std::collections::BTreeSet;

use abducer_core::frontend::ast::{self, Exp, Stm};
use abducer_core::frontend::cfg_text::parse_stmt;
use abducer_core::frontend::*;
use abducer_core::seplogic::{name, Cmp, Name};

fn listing(file: &str) -> String {
    let path = format!("{}/../../listings/{file}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

fn corpus() -> Vec<(String, String)> {
    let dir = format!("{}/../../corpus", env!("CARGO_MANIFEST_DIR"));
    let mut out: Vec<(String, String)> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "tl"))
        .map(|p| (p.display().to_string(), std::fs::read_to_string(&p).unwrap()))
        .collect();
    out.sort();
    for f in ["nested.tl", "inner_loop.tl", "weighted_sum.tl"] {
        out.push((f.to_string(), listing(f)));
    }
    out
}

fn names(v: &[&str]) -> Vec<Name> {
    v.iter().map(|s| name(s)).collect()
}

#[test]
fn identity_function_parses() {
    let m = parse_module("int f(x){ return x; }").unwrap();
    assert_eq!(m.functions.len(), 1);
    assert_eq!(m.functions[0].name, "f");
    assert_eq!(m.functions[0].params, vec!["x".to_string()]);
    assert!(matches!(m.functions[0].body.as_slice(), [Stm::Return(Some(Exp::Var(x)), _)] if x == "x"));
}

#[test]
fn nested_listing_parses() {
    let m = parse_module(&listing("nested.tl")).unwrap();
    let f = &m.functions[0];
    assert_eq!(f.params, vec!["x", "y", "z"]);
    let ifs = f
        .body
        .iter()
        .filter(|s| matches!(s, Stm::If(ast::Cond::Nondet, t, _) if matches!(t.as_slice(), [Stm::If(..)])))
        .count();
    assert_eq!(ifs, 1);
}

#[test]
fn malformed_input_is_rejected() {
    let e = parse_module("int f({").unwrap_err();
    assert_eq!(e.line, 1);
    assert!(compile("int f(x) { x = ; }").is_err());
}

#[test]
fn recursion_is_rejected() {
    let e = compile("int f(x) { r = g(x); return r; }\nint g(y) { r = f(y); return r; }").unwrap_err();
    assert!(e.to_string().contains("recurs"), "{e}");
}

#[test]
fn straight_line_body_is_a_chain() {
    let p = compile("int f(x, y) { a = x->next; x->data = y; return a; }").unwrap();
    let f = p.get("f").unwrap();
    assert_eq!(f.kind, FnKind::Surface);
    assert_eq!(f.cfg.entry, 0);
    assert_eq!(f.cfg.exit, f.cfg.locs - 1);
    for l in 0..f.cfg.locs {
        assert!(f.cfg.out_edges(l).count() <= 1);
    }
    assert_eq!(f.cfg.edges.len(), 3);
    assert_eq!(f.outputs, names(&["return"]));
}

#[test]
fn inner_loop_becomes_a_loop_function() {
    let p = compile(&listing("inner_loop.tl")).unwrap();
    let lf = p.get("inner_loop.loop0").expect("extracted loop");
    assert_eq!(lf.kind, FnKind::Loop);
    let out: Vec<&Edge> = lf.cfg.out_edges(lf.cfg.entry).collect();
    assert_eq!(out.len(), 2);
    let conds: BTreeSet<(Cmp, String)> = out
        .iter()
        .map(|e| match &e.stmt {
            Stmt::Assume(c) => (c.op, c.to_string()),
            s => panic!("unexpected {s}"),
        })
        .collect();
    assert!(conds.iter().any(|(op, s)| *op == Cmp::Ne && s.contains('i')));
    assert!(conds.iter().any(|(op, s)| *op == Cmp::Eq && s.contains('i')));
    assert!(out.iter().any(|e| e.to == lf.cfg.exit));
    assert!(lf.back_edges().count() >= 1);
    assert_eq!(changed_vars(&lf.cfg.edges), [name("i")].into_iter().collect());
}

#[test]
fn weighted_sum_extracts_both_loops_inner_first() {
    let p = compile(&listing("weighted_sum.tl")).unwrap();
    let pos = |f: &str| p.order.iter().position(|g| &**g == f).unwrap_or_else(|| panic!("{f} missing"));
    assert!(pos("weighted_sum.loop1") < pos("weighted_sum.loop0"));
    assert!(pos("weighted_sum.loop0") < pos("weighted_sum"));
    let outer = p.get("weighted_sum.loop0").unwrap();
    assert!(outer.cfg.edges.iter().any(|e| e.stmt.callee().is_some_and(|c| &**c == "weighted_sum.loop1")));
}

#[test]
fn changed_vars_examples() {
    assert!(changed_vars(std::iter::empty()).is_empty());
    let e = Edge { from: 0, stmt: parse_stmt("assume(x != y)", 1).unwrap(), to: 1 };
    assert!(changed_vars([&e]).is_empty());
}

#[test]
fn lowered_cfgs_are_well_formed() {
    for (file, src) in corpus() {
        let p = compile(&src).unwrap_or_else(|e| panic!("{file}: {e}"));
        for f in p.functions.values() {
            for l in 0..f.cfg.locs {
                let out: Vec<&Edge> = f.cfg.out_edges(l).collect();
                assert!(out.len() <= 2, "{file} {}: {l} has {} successors", f.name, out.len());
                if out.len() == 2 {
                    match (&out[0].stmt, &out[1].stmt) {
                        (Stmt::Assume(a), Stmt::Assume(b)) => {
                            assert_eq!(a.negate().pure(), b.pure(), "{file} {}", f.name)
                        }
                        _ => panic!("{file} {}: branching on non-assume edges", f.name),
                    }
                }
            }
            // every cycle goes through the entry: a DFS that never enters the
            // entry again finds no back edge
            let mut state = vec![0u8; f.cfg.locs];
            fn dfs(f: &Function, l: Loc, state: &mut [u8]) -> bool {
                state[l] = 1;
                for e in f.cfg.out_edges(l) {
                    if e.to == f.cfg.entry {
                        continue;
                    }
                    if state[e.to] == 1 || (state[e.to] == 0 && !dfs(f, e.to, state)) {
                        return false;
                    }
                }
                state[l] = 2;
                true
            }
            assert!(dfs(f, f.cfg.entry, &mut state), "{file} {}: cycle avoiding the entry", f.name);
            if f.kind == FnKind::Surface {
                assert_eq!(f.back_edges().count(), 0, "{file} {}", f.name);
            }
        }
    }
}

#[test]
fn printed_cfgs_parse_back() {
    for (file, src) in corpus() {
        let p = compile(&src).unwrap();
        let text = p.to_string();
        let q = parse_program_text(&text).unwrap_or_else(|e| panic!("{file}: {e}\n{text}"));
        assert_eq!(q, p, "{file}");
        assert_eq!(q.to_string(), text);
    }
}

#[test]
fn call_order_lists_callees_first() {
    let p = compile("int h(a) { r = a->data; return r; }\nint g(b) { r = h(b); return r; }\nint f(c) { r = g(c); s = h(c); return s; }").unwrap();
    assert_eq!(p.order, names(&["h", "g", "f"]));
}
