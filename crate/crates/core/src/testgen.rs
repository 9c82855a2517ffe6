//! Seeded random generators for formulas, statements and frames, shared by
//! the property suites and the acceptance harness.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::biabduction::{atomic_contract, learn};
use crate::engine::{analyze_program, Options, Status};
use crate::frontend::{compile, Cond, Operand, Program, Rhs, Stmt};
use crate::interpreter::{check_contract, exec_stmt, Limits, OracleOptions};
use crate::memory::{Config, Val};
use crate::seplogic::{
    abduce, abstract_alpha, entails, enumerate_models, models, name, BinOp, Bounds, Cmp, Expr, Fresh, Name, Pure,
    Spatial, SymHeap, Var,
};

/// Random symbolic heap over `vars` with NULL as the only constant.
pub fn random_heap<R: Rng>(rng: &mut R, vars: &[Var], max_spatial: usize, max_pure: usize) -> SymHeap {
    let fields = ["next", "data"];
    let target = |rng: &mut R| -> Expr {
        if rng.gen_ratio(1, 4) {
            Expr::Null
        } else {
            Expr::Var(vars.choose(rng).unwrap().clone())
        }
    };
    let mut spatial = Vec::new();
    for _ in 0..rng.gen_range(0..=max_spatial) {
        let src = vars.choose(rng).unwrap().clone();
        let t = target(rng);
        if rng.gen_ratio(1, 3) {
            spatial.push(Spatial::ls(src, t));
        } else {
            spatial.push(Spatial::pts(src, fields.choose(rng).unwrap(), t));
        }
    }
    let mut pure = Vec::new();
    for _ in 0..rng.gen_range(0..=max_pure) {
        let a = Expr::Var(vars.choose(rng).unwrap().clone());
        let b = target(rng);
        pure.push(if rng.gen_bool(0.5) { Pure::eq(a, b) } else { Pure::ne(a, b) });
    }
    SymHeap::new(pure, spatial)
}

/// A weakening of `h`: drop atoms, fold chains into segments, hide variables
/// behind fresh logicals. Used to get entailment queries that often hold.
pub fn random_weakening<R: Rng>(rng: &mut R, h: &SymHeap, hidden: &[Var]) -> SymHeap {
    let mut pure: Vec<Pure> = h.pure.iter().filter(|_| rng.gen_ratio(2, 3)).cloned().collect();
    let mut spatial: Vec<Spatial> = Vec::new();
    for a in &h.spatial {
        match a {
            Spatial::PointsTo { src, field, val } if &**field == "next" && rng.gen_ratio(1, 3) => {
                spatial.push(Spatial::ls(src.clone(), val.clone()));
            }
            _ if rng.gen_ratio(1, 8) => {}
            _ => spatial.push(a.clone()),
        }
    }
    // occasionally rename one variable to an existential
    if let Some(x) = h.vars().into_iter().collect::<Vec<_>>().choose(rng) {
        if let Some(e) = hidden.choose(rng) {
            if rng.gen_ratio(1, 3) {
                let m = [(x.clone(), Expr::Var(e.clone()))].into_iter().collect();
                let w = SymHeap::new(std::mem::take(&mut pure), std::mem::take(&mut spatial)).subst(&m);
                return w;
            }
        }
    }
    SymHeap::new(pure, spatial)
}

/// A next-chain through hidden logicals, mixed with segments and random
/// atoms, so abstraction has something to fold.
pub fn random_chain_heap<R: Rng>(rng: &mut R, vars: &[Var], hidden: &[Var]) -> SymHeap {
    let mut base = random_heap(rng, vars, 1, 1);
    let start = vars.choose(rng).unwrap().clone();
    let len = rng.gen_range(1..=hidden.len().min(3));
    let mut cur = start;
    for h in &hidden[..len] {
        if rng.gen_ratio(1, 4) {
            base.spatial.push(Spatial::ls(cur.clone(), Expr::Var(h.clone())));
        } else {
            base.spatial.push(Spatial::pts(cur.clone(), "next", Expr::Var(h.clone())));
        }
        cur = h.clone();
    }
    let end = if rng.gen_ratio(1, 2) { Expr::Null } else { Expr::Var(vars.choose(rng).unwrap().clone()) };
    base.spatial.push(Spatial::pts(cur, "next", end));
    SymHeap::new(base.pure, base.spatial)
}

/// Random atomic statement over `vars` and the fields `next` and `data`.
/// Nondeterministic assignment is left out: the location it invents depends
/// on the whole heap.
pub fn random_stmt<R: Rng>(rng: &mut R, vars: &[Name]) -> Stmt {
    let v = |rng: &mut R| vars.choose(rng).unwrap().clone();
    let field = |rng: &mut R| name(["next", "data"].choose(rng).unwrap());
    let operand = |rng: &mut R| match rng.gen_range(0..4) {
        0 => Operand::Null,
        1 => Operand::Num(rng.gen_range(0..3)),
        _ => Operand::Var(vars.choose(rng).unwrap().clone()),
    };
    let cmp = |rng: &mut R| *[Cmp::Eq, Cmp::Ne, Cmp::Le, Cmp::Lt, Cmp::Ge, Cmp::Gt].choose(rng).unwrap();
    match rng.gen_range(0..8) {
        0 => Stmt::Assign(v(rng), Rhs::Var(v(rng))),
        1 => Stmt::Assign(v(rng), if rng.gen_bool(0.5) { Rhs::Null } else { Rhs::Num(rng.gen_range(0..3)) }),
        2 => Stmt::Assign(v(rng), Rhs::Bin(*[BinOp::Add, BinOp::Sub, BinOp::Mul].choose(rng).unwrap(), v(rng), v(rng))),
        3 | 4 => Stmt::Load { dst: v(rng), src: v(rng), field: field(rng) },
        5 => Stmt::Store { dst: v(rng), field: field(rng), src: v(rng) },
        6 => Stmt::Assume(Cond { op: cmp(rng), lhs: Operand::Var(v(rng)), rhs: operand(rng) }),
        _ => Stmt::Assert(Cond { op: cmp(rng), lhs: Operand::Var(v(rng)), rhs: operand(rng) }),
    }
}

/// Random value: NULL, a small integer, or one of the first `locs` locations.
pub fn random_val<R: Rng>(rng: &mut R, locs: u32) -> Val {
    match rng.gen_range(0..3) {
        0 => Val::Null,
        1 => Val::Int(rng.gen_range(0..3)),
        _ => Val::Loc(rng.gen_range(1..=locs)),
    }
}

/// Random concrete configuration over `vars` with cells on locations 1..=locs.
pub fn random_config<R: Rng>(rng: &mut R, vars: &[Name], locs: u32) -> Config {
    let mut c = Config::default();
    for x in vars {
        c.stack.insert(Var::Prog(x.clone()), random_val(rng, locs));
    }
    for l in 1..=locs {
        for f in ["next", "data"] {
            if rng.gen_ratio(2, 3) {
                c.heap.insert((l, name(f)), random_val(rng, locs));
            }
        }
    }
    c
}

/// Source of a random loop-free function `f(x, y, z)`: loads, stores,
/// branches on parameters, loaded values and `?`, and asserts.
pub fn random_program<R: Rng>(rng: &mut R) -> String {
    fn block<R: Rng>(rng: &mut R, depth: usize, out: &mut String, indent: usize) {
        let pad = "    ".repeat(indent);
        let vars = ["x", "y", "z", "r", "t"];
        let ptrs = ["x", "y", "z", "x", "y", "t"];
        let fields = ["next", "data"];
        for _ in 0..rng.gen_range(1..=3) {
            match rng.gen_range(0..7) {
                0 | 1 => {
                    let dst = ["r", "t"].choose(rng).unwrap();
                    out.push_str(&format!(
                        "{pad}{dst} = {}->{};\n",
                        ptrs.choose(rng).unwrap(),
                        fields.choose(rng).unwrap()
                    ));
                }
                2 => out.push_str(&format!(
                    "{pad}{}->{} = {};\n",
                    ptrs.choose(rng).unwrap(),
                    fields.choose(rng).unwrap(),
                    vars.choose(rng).unwrap()
                )),
                3 | 4 if depth > 0 => {
                    let cond = match rng.gen_range(0..4) {
                        0 => "?".to_string(),
                        1 => format!("{} == NULL", vars.choose(rng).unwrap()),
                        2 => format!("{} != NULL", ["x", "y", "z"].choose(rng).unwrap()),
                        _ => format!("{} != {}", vars.choose(rng).unwrap(), vars.choose(rng).unwrap()),
                    };
                    out.push_str(&format!("{pad}if ({cond}) {{\n"));
                    block(rng, depth - 1, out, indent + 1);
                    out.push_str(&format!("{pad}}} else {{\n"));
                    block(rng, depth - 1, out, indent + 1);
                    out.push_str(&format!("{pad}}}\n"));
                }
                5 => out.push_str(&format!("{pad}assert({} != NULL);\n", vars.choose(rng).unwrap())),
                _ => out.push_str(&format!("{pad}t = {};\n", vars.choose(rng).unwrap())),
            }
        }
    }
    let mut body = String::new();
    block(rng, 2, &mut body, 1);
    format!("int f(x, y, z) {{\n    int r;\n    int t;\n{body}    return r;\n}}\n")
}

// Property checks shared by the proptest suites and the acceptance harness.
// Each takes a seed and reports a counterexample as text.

fn prop_bounds() -> Bounds {
    Bounds { max_cells: 4, value_range: 1 }
}

fn free_vars() -> Vec<Var> {
    ["a", "b", "c", "d"].iter().map(|s| Var::anchor(s)).collect()
}

/// Every entailment the prover accepts holds on all bounded models.
pub fn prop_entailment(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lhs = random_heap(&mut rng, &free_vars(), 4, 2);
    let rhs = random_weakening(&mut rng, &lhs, &[Var::Logical(1), Var::Logical(2)]);
    let e = entails(&lhs, &rhs);
    if !e.proved {
        return Ok(());
    }
    let full = rhs.star(&e.frame);
    let extra: Vec<Var> = rhs.vars().into_iter().filter(|v| v.is_anchor()).collect();
    for c in enumerate_models(&lhs, prop_bounds(), &extra) {
        if !models(&c, &full) {
            return Err(format!("{lhs} |- {full} fails on {c}"));
        }
    }
    Ok(())
}

/// For an abduction result, every bounded model of `Q * M` models the
/// instantiated demand together with the frame.
pub fn prop_biabduction(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let state = random_heap(&mut rng, &free_vars(), 3, 1);
    let pattern = [Var::Logical(90), Var::Logical(91)];
    let mut dvars = free_vars();
    dvars.extend(pattern.iter().cloned());
    let demand = random_heap(&mut rng, &dvars, 2, 1);
    let exists: BTreeSet<Var> = pattern.iter().cloned().collect();
    let mut fresh = Fresh::above(&state.star(&demand));
    let Some(ab) = abduce(&state, &demand, &exists, &mut fresh) else { return Ok(()) };
    // the missing part talks about the state after unfolding
    let lhs = ab.state.star(&ab.missing);
    let rhs = demand.subst(&ab.assign).star(&SymHeap::new(vec![], ab.frame.clone()));
    let extra: Vec<Var> = rhs.vars().into_iter().filter(|v| v.is_anchor()).collect();
    for c in enumerate_models(&lhs, prop_bounds(), &extra) {
        if !models(&c, &rhs) {
            return Err(format!("{} * [{}] |- {rhs} fails on {c}", ab.state, ab.missing));
        }
    }
    for c in enumerate_models(&ab.state, prop_bounds(), &[]) {
        if !models(&c, &state) {
            return Err(format!("unfolded state {} does not imply {state}: {c}", ab.state));
        }
    }
    Ok(())
}

/// The abstraction only weakens: every bounded model of a heap models its
/// abstraction.
pub fn prop_alpha(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hidden = [Var::Logical(1), Var::Logical(2), Var::Logical(3)];
    let f = if seed.is_multiple_of(2) {
        let mut vars = free_vars();
        vars.extend(hidden[..2].iter().cloned());
        random_heap(&mut rng, &vars, 4, 1)
    } else {
        random_chain_heap(&mut rng, &free_vars()[..2], &hidden)
    };
    let g = abstract_alpha(&f);
    for c in enumerate_models(&f, prop_bounds(), &[]) {
        if !models(&c, &g) {
            return Err(format!("{f} ~> {g} fails on {c}"));
        }
    }
    Ok(())
}

/// A statement that runs without error on a configuration runs the same
/// way on that configuration plus disjoint cells, which it leaves alone.
pub fn prop_frame(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vars: Vec<Name> = ["x", "y", "z"].iter().map(|s| name(s)).collect();
    let st = random_stmt(&mut rng, &vars);
    let c = random_config(&mut rng, &vars, 3);
    let mut big = c.clone();
    let extra: Vec<((u32, Name), Val)> = (10..10 + rng.gen_range(1..4u32))
        .map(|l| ((l, name(["next", "data"].choose(&mut rng).unwrap())), random_val(&mut rng, 3)))
        .collect();
    big.heap.extend(extra.iter().cloned());
    let prog = Program::default();
    let limits = Limits::default();
    let Ok(small) = exec_stmt(&prog, &c, &st, limits) else { return Ok(()) };
    let framed = exec_stmt(&prog, &big, &st, limits).map_err(|e| format!("{st:?} fails only with the frame: {e}"))?;
    let mut expected: Vec<Config> = small
        .into_iter()
        .map(|mut d| {
            d.heap.extend(extra.iter().cloned());
            d
        })
        .collect();
    expected.sort();
    let mut got = framed;
    got.sort();
    if got != expected {
        return Err(format!("{st:?} on {c}: framed run differs"));
    }
    Ok(())
}

/// The contracts of a random loop-free function have pairwise
/// incompatible preconditions: no bounded model satisfies two of them.
pub fn prop_sibling_worlds(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // most random functions never split; keep drawing until one does
    let mut found = None;
    for _ in 0..16 {
        let src = random_program(&mut rng);
        let prog = compile(&src).map_err(|e| format!("generator produced bad source: {e}\n{src}"))?;
        let a = analyze_program(&prog, Options::default());
        let s = a.summaries[&name("f")].clone();
        if s.status == Status::Analyzed && s.contracts.len() > 1 {
            found = Some((src, s));
            break;
        }
    }
    let Some((src, s)) = found else { return Ok(()) };
    let anchors: Vec<Var> = ["x", "y", "z"].iter().map(|s| Var::anchor(s)).collect();
    for (i, ci) in s.contracts.iter().enumerate() {
        for cj in &s.contracts[i + 1..] {
            for m in enumerate_models(&ci.pre, prop_bounds(), &anchors) {
                if models(&m, &cj.pre) {
                    return Err(format!("{m} satisfies both {} and {}\n{src}", ci.pre, cj.pre));
                }
            }
        }
    }
    Ok(())
}

/// What learning adds to a precondition never mentions program variables.
pub fn prop_antiframe(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vars: Vec<Name> = ["x", "y", "z"].iter().map(|s| name(s)).collect();
    let anchors: Vec<Var> = vars.iter().map(|x| Var::Anchor(x.clone())).collect();
    let mut hv = anchors.clone();
    hv.push(Var::Logical(1));
    let pre = random_heap(&mut rng, &hv, 2, 1);
    // program variables start at their anchors or at a logical
    let mut bound = Vec::new();
    for (x, a) in vars.iter().zip(&anchors) {
        let val = if rng.gen_ratio(3, 4) { Expr::Var(a.clone()) } else { Expr::Var(Var::Logical(1)) };
        bound.push(Pure::eq(Expr::Var(Var::Prog(x.clone())), val));
    }
    let curr = pre.star(&SymHeap::from_pure(bound));
    let st = random_stmt(&mut rng, &vars);
    let mut fresh = Fresh::above(&curr);
    let Some(d) = atomic_contract(&st, &mut fresh) else { return Ok(()) };
    let set: BTreeSet<Var> = anchors.iter().cloned().collect();
    if let Ok(l) = learn(&pre, &curr, &d, &set, true, &mut fresh) {
        if !l.missing.prog_vars().is_empty() {
            return Err(format!("{st:?} from {curr} learned {}", l.missing));
        }
    }
    Ok(())
}

/// Contracts inferred for a random loop-free function survive the oracle.
pub fn prop_random_program_sound(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let src = random_program(&mut rng);
    let prog = compile(&src).map_err(|e| format!("generator produced bad source: {e}\n{src}"))?;
    let a = analyze_program(&prog, Options::default());
    let s = &a.summaries[&name("f")];
    if s.status != Status::Analyzed {
        return Ok(());
    }
    let opts = OracleOptions { samples: 40, max_cells: 4, seed, ..OracleOptions::default() };
    let r = check_contract(&prog, "f", &s.contracts, &opts);
    match r.violations.first() {
        None => Ok(()),
        Some(v) => Err(format!("{}: {} from {}\n{src}", v.contract, v.reason, v.model)),
    }
}
