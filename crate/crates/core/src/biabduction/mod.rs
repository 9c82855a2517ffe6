//! Contracts of atomic statements and callees, and the solve/learn step
//! that applies one of them to an analysis state.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::frontend::{FnKind, Function, Operand, Rhs, Stmt, RETURN};
use crate::memory::{eval_cmp, Val};
use crate::seplogic::{
    abduce, heap_sat, name, normalize, reach_set, Cmp, Expr, Fresh, Name, Pure, Spatial, SymHeap, Var, Verdict,
};

/// A pre/post pair. The posts form a disjunction; logical variables are
/// shared between the pre and every post.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Contract {
    pub pre: SymHeap,
    pub posts: Vec<SymHeap>,
}

impl fmt::Display for Contract {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "pre:  {}", self.pre)?;
        for p in &self.posts {
            write!(f, "\npost: {p}")?;
        }
        Ok(())
    }
}

impl Serialize for Contract {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Contract", 2)?;
        st.serialize_field("pre", &self.pre.to_string())?;
        st.serialize_field("posts", &self.posts.iter().map(|p| p.to_string()).collect::<Vec<_>>())?;
        st.end()
    }
}

/// A contract instantiated for one statement: `exists` are the pattern
/// variables of `pre` that matching may bind, `written` the program
/// variables whose old bindings the step kills.
#[derive(Clone, Debug)]
pub struct Demand {
    pub pre: SymHeap,
    pub posts: Vec<SymHeap>,
    pub exists: BTreeSet<Var>,
    pub written: Vec<Var>,
}

fn pv(x: &Name) -> Var {
    Var::Prog(x.clone())
}

fn bind(x: &Name, a: &Var) -> Pure {
    Pure::eq(Expr::Var(pv(x)), Expr::Var(a.clone()))
}

/// Contract of a non-call statement over fresh pattern variables.
pub fn atomic_contract(st: &Stmt, fresh: &mut Fresh) -> Option<Demand> {
    let mut exists = BTreeSet::new();
    let mut pat = |exists: &mut BTreeSet<Var>| {
        let v = fresh.var();
        exists.insert(v.clone());
        v
    };
    let written: Vec<Var> = st.written().iter().map(pv).collect();
    let (pre, post) = match st {
        Stmt::Assign(x, rhs) => {
            let (mut pre, value): (Vec<Pure>, Expr) = match rhs {
                Rhs::Num(n) => (vec![], Expr::Num(*n)),
                Rhs::Null => (vec![], Expr::Null),
                Rhs::Nondet => (vec![], Expr::Var(fresh.var())),
                Rhs::Var(y) => {
                    let a = pat(&mut exists);
                    (vec![bind(y, &a)], Expr::Var(a))
                }
                Rhs::Un(op, y) => {
                    let a = pat(&mut exists);
                    (vec![bind(y, &a)], Expr::un(*op, Expr::Var(a)))
                }
                Rhs::Bin(op, y, z) => {
                    let a = pat(&mut exists);
                    let b = if y == z { a.clone() } else { pat(&mut exists) };
                    (vec![bind(y, &a), bind(z, &b)], Expr::bin(*op, Expr::Var(a), Expr::Var(b)))
                }
            };
            let mut post: Vec<Pure> = pre.iter().filter(|p| !p.mentions(&pv(x))).cloned().collect();
            post.push(Pure::eq(Expr::Var(pv(x)), value));
            pre.sort();
            (SymHeap::from_pure(pre), SymHeap::from_pure(post))
        }
        Stmt::Load { dst, src, field } => {
            let a = pat(&mut exists);
            let b = pat(&mut exists);
            let cell = Spatial::pts(a.clone(), field, Expr::Var(b.clone()));
            let pre = SymHeap::new(vec![bind(src, &a)], vec![cell.clone()]);
            let mut post = vec![bind(dst, &b)];
            if src != dst {
                post.push(bind(src, &a));
            }
            (pre, SymHeap::new(post, vec![cell]))
        }
        Stmt::Store { dst, field, src } => {
            let a = pat(&mut exists);
            let b = if src == dst { a.clone() } else { pat(&mut exists) };
            let c = pat(&mut exists);
            let binds = vec![bind(dst, &a), bind(src, &b)];
            let pre = SymHeap::new(binds.clone(), vec![Spatial::pts(a.clone(), field, Expr::Var(c))]);
            let post = SymHeap::new(binds, vec![Spatial::pts(a, field, Expr::Var(b))]);
            (pre, post)
        }
        Stmt::Return(x) => {
            let a = pat(&mut exists);
            let pre = SymHeap::from_pure(vec![bind(x, &a)]);
            let mut post = vec![bind(&name(RETURN), &a)];
            if &**x != RETURN {
                post.push(bind(x, &a));
            }
            (pre, SymHeap::from_pure(post))
        }
        Stmt::Assume(c) | Stmt::Assert(c) => {
            let mut binds = Vec::new();
            let mut val = |o: &Operand, binds: &mut Vec<Pure>, exists: &mut BTreeSet<Var>| -> Expr {
                match o {
                    Operand::Var(x) => {
                        // `x < x` reuses the pattern of the first occurrence
                        if let Some(e) = binds.iter().find_map(|p: &Pure| match p.as_var_eq() {
                            Some((v, e)) if *v == pv(x) => Some(e.clone()),
                            _ => None,
                        }) {
                            return e;
                        }
                        let v = fresh.var();
                        exists.insert(v.clone());
                        binds.push(bind(x, &v));
                        Expr::Var(v)
                    }
                    other => other.expr(),
                }
            };
            let l = val(&c.lhs, &mut binds, &mut exists);
            let r = val(&c.rhs, &mut binds, &mut exists);
            let cond = Pure::new(c.op, l, r);
            let mut post = binds.clone();
            post.push(cond.clone());
            let pre = if matches!(st, Stmt::Assert(_)) { post.clone() } else { binds };
            (SymHeap::from_pure(pre), SymHeap::from_pure(post))
        }
        Stmt::Call { .. } | Stmt::LoopCall { .. } => return None,
    };
    Some(Demand { pre, posts: vec![post], exists, written })
}

/// The binding of program variable `x` in a normalized state.
pub fn binding(q: &SymHeap, x: &Var) -> Option<Expr> {
    q.pure.iter().find_map(|p| match p.as_var_eq() {
        Some((v, e)) if v == x && !e.vars().iter().any(|w| w.is_prog()) => Some(e.clone()),
        _ => None,
    })
}

/// Rewrite a condition over program variables into one over their values
/// in `q`. Unbound variables stay as they are.
pub fn rewrite_cond(q: &SymHeap, c: &Pure) -> Pure {
    c.subst(&|v| if v.is_prog() { binding(q, v) } else { None })
}

/// Instantiate a callee contract at a call site: plain logicals are renamed
/// apart, parameter anchors become pattern variables tied to the arguments,
/// and the callee's outputs are mapped onto the caller's variables.
pub fn call_demand(c: &Contract, callee: &Function, st: &Stmt, fresh: &mut Fresh) -> Demand {
    let (args, outs): (&[Name], Vec<(Name, Name)>) = match st {
        Stmt::Call { dst, args, .. } => (args, vec![(name(RETURN), dst.clone())]),
        Stmt::LoopCall { args, outputs, .. } => (args, outputs.iter().map(|o| (o.clone(), o.clone())).collect()),
        _ => panic!("call_demand on a non-call"),
    };
    let mut map: BTreeMap<Var, Expr> = BTreeMap::new();
    let mut exists = BTreeSet::new();
    let mut all = c.pre.vars();
    for p in &c.posts {
        all.extend(p.vars());
    }
    for v in &all {
        if v.is_plain_logical() {
            let w = fresh.var();
            if c.pre.mentions(v) {
                exists.insert(w.clone());
            }
            map.insert(v.clone(), Expr::Var(w));
        }
    }
    let mut binds = Vec::new();
    for (p, a) in callee.params.iter().zip(args) {
        let w = fresh.var();
        exists.insert(w.clone());
        map.insert(Var::Anchor(p.clone()), Expr::Var(w.clone()));
        binds.push(bind(a, &w));
    }
    // callee program variables: outputs map to the caller, the rest is dropped
    let out_map: BTreeMap<Var, Var> = outs.iter().map(|(o, d)| (pv(o), pv(d))).collect();
    let pre = c.pre.subst(&map);
    let pre = SymHeap::new(pre.pure.into_iter().chain(binds).collect(), pre.spatial);
    let mut posts = Vec::new();
    for q in &c.posts {
        let q = q.subst(&map);
        let pure = q
            .pure
            .iter()
            .filter(|p| p.vars().iter().all(|v| !v.is_prog() || out_map.contains_key(v)))
            .map(|p| p.subst(&|v| out_map.get(v).map(|d| Expr::Var(d.clone()))))
            .collect();
        posts.push(SymHeap::new(pure, q.spatial));
    }
    let written = match callee.kind {
        FnKind::Surface | FnKind::Loop => outs.iter().map(|(_, d)| pv(d)).collect(),
    };
    Demand { pre, posts, exists, written }
}

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize)]
pub enum LearnFailure {
    #[error("the demand contradicts the state")]
    NoMatch,
    #[error("missing facts mention {0}, which is not reachable from the entry anchors")]
    Unreachable(String),
    #[error("learned precondition is unsatisfiable")]
    Unsat,
    #[error("satisfiability of the learned precondition is unknown")]
    Unknown,
    #[error("the step needs {0} but learning is disabled")]
    LearningDisabled(String),
}

/// Outcome of applying a demand: what had to be learned and the successor
/// states, one per post disjunct that is not contradictory.
#[derive(Clone, Debug)]
pub struct Learned {
    pub missing: SymHeap,
    pub posts: Vec<SymHeap>,
}

/// Replace logicals of `m` unreachable through `p * m` by their defining
/// expressions in `q` where possible.
fn rewrite_missing(m: &SymHeap, p: &SymHeap, q: &SymHeap, anchors: &BTreeSet<Var>) -> SymHeap {
    let mut m = m.clone();
    for _ in 0..8 {
        let reach = reach_set(&p.star(&m), anchors);
        let bad: Vec<Var> = m.vars().into_iter().filter(|v| !v.is_prog() && !reach.contains(v)).collect();
        let mut changed = false;
        for v in bad {
            if !m.pure.iter().any(|a| a.mentions(&v)) || m.spatial.iter().any(|a| a.mentions(&v)) {
                continue;
            }
            let def = q.pure.iter().find_map(|a| match a.as_var_eq() {
                Some((w, e)) if *w == v && !e.mentions(&v) && !e.vars().iter().any(|x| x.is_prog()) => Some(e.clone()),
                _ => None,
            });
            let def = def.or_else(|| {
                q.pure.iter().find_map(|a| {
                    if a.op != Cmp::Eq {
                        return None;
                    }
                    match (&a.lhs, &a.rhs) {
                        (e, Expr::Var(w)) if *w == v && !e.mentions(&v) && !e.vars().iter().any(|x| x.is_prog()) => {
                            Some(e.clone())
                        }
                        _ => None,
                    }
                })
            });
            if let Some(e) = def {
                let map = BTreeMap::from([(v, e)]);
                m = SymHeap::new(m.pure.iter().map(|a| a.subst(&|x| map.get(x).cloned())).collect(), m.spatial.clone());
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    m
}

/// Solve `q * M |- demand.pre * F` and build `demand.post * F` for each post.
/// `p` is the precondition learned so far; with `learning` off any nonempty
/// `M` is a failure.
pub fn learn(
    p: &SymHeap,
    q: &SymHeap,
    d: &Demand,
    anchors: &BTreeSet<Var>,
    learning: bool,
    fresh: &mut Fresh,
) -> Result<Learned, LearnFailure> {
    fresh.bump_past(p);
    let ab = abduce(q, &d.pre, &d.exists, fresh).ok_or(LearnFailure::NoMatch)?;
    let mut missing = ab.missing.clone();
    if !missing.pure.is_empty() || !missing.spatial.is_empty() {
        if !learning {
            return Err(LearnFailure::LearningDisabled(missing.to_string()));
        }
        missing = rewrite_missing(&missing, p, &ab.state, anchors);
        if let Some(v) = missing.vars().into_iter().find(|v| v.is_prog()) {
            return Err(LearnFailure::Unreachable(v.to_string()));
        }
        let reach = reach_set(&p.star(&missing), anchors);
        if let Some(v) = missing.vars().into_iter().find(|v| !reach.contains(v)) {
            return Err(LearnFailure::Unreachable(v.to_string()));
        }
        match heap_sat(&p.star(&missing)) {
            Verdict::Sat => {}
            Verdict::Unsat => return Err(LearnFailure::Unsat),
            Verdict::Unknown => return Err(LearnFailure::Unknown),
        }
    }
    let kept: Vec<Pure> = ab
        .state
        .pure
        .iter()
        .filter(|a| match a.as_var_eq() {
            Some((v @ Var::Prog(_), _)) => !d.written.contains(v),
            _ => true,
        })
        .cloned()
        .collect();
    let mut posts = Vec::new();
    for r in &d.posts {
        let r = r.subst(&ab.assign);
        let mut pure = kept.clone();
        pure.extend(missing.pure.iter().cloned());
        pure.extend(r.pure.iter().cloned());
        let mut spatial = ab.frame.clone();
        spatial.extend(r.spatial.iter().cloned());
        let (next, _) = normalize(&SymHeap::new(pure, spatial), fresh);
        if heap_sat(&next) == Verdict::Unsat {
            continue;
        }
        posts.push(next);
    }
    Ok(Learned { missing, posts })
}

/// Keep only the bindings of the given program variables.
pub fn project(h: &SymHeap, keep: &BTreeSet<Var>) -> SymHeap {
    SymHeap::new(
        h.pure.iter().filter(|p| p.vars().iter().all(|v| !v.is_prog() || keep.contains(v))).cloned().collect(),
        h.spatial.clone(),
    )
}

fn occurrences(h: &SymHeap, v: &Var) -> usize {
    h.pure.iter().filter(|p| p.mentions(v)).count() + h.spatial.iter().filter(|a| a.mentions(v)).count()
}

fn is_source(h: &SymHeap, v: &Var) -> bool {
    h.spatial.iter().any(|a| a.source() == v)
}

/// One substitution `v := e` justified by an equality in `h`, where `v` is a
/// plain logical outside `protected`.
fn pick_subst(h: &SymHeap, protected: &BTreeSet<Var>) -> Option<(Var, Expr)> {
    for p in &h.pure {
        if p.op != Cmp::Eq {
            continue;
        }
        for (a, b) in [(&p.lhs, &p.rhs), (&p.rhs, &p.lhs)] {
            let Expr::Var(v) = a else { continue };
            if !v.is_plain_logical() || protected.contains(v) || b.mentions(v) {
                continue;
            }
            let ok = match b {
                Expr::Var(w) => !w.is_prog(),
                Expr::Null | Expr::Num(_) => !is_source(h, v),
                _ => false,
            };
            if ok {
                return Some((v.clone(), b.clone()));
            }
        }
    }
    None
}

/// Drop equalities and atoms over logicals that carry no information, so
/// reported contracts read the way one would write them by hand.
pub fn simplify_contract(c: &Contract) -> Contract {
    let mut pre = c.pre.clone();
    let mut posts = c.posts.clone();
    let anchors: BTreeSet<Var> = pre.vars().into_iter().filter(|v| v.is_anchor()).collect();
    // pre equalities rewrite the whole contract
    for _ in 0..64 {
        let Some((v, e)) = pick_subst(&pre, &anchors) else { break };
        let map = BTreeMap::from([(v, e)]);
        pre = pre.subst(&map);
        posts = posts.iter().map(|q| q.subst(&map)).collect();
    }
    let in_posts = |v: &Var, posts: &[SymHeap]| posts.iter().any(|q| q.mentions(v));
    loop {
        let drop = pre.pure.iter().position(|p| {
            p.vars().iter().any(|v| v.is_plain_logical() && occurrences(&pre, v) == 1 && !in_posts(v, &posts))
        });
        match drop {
            Some(k) => {
                pre.pure.remove(k);
            }
            None => break,
        }
    }
    pre.pure.retain(|p| !(p.vars().is_empty() && ground_holds(p)));
    let shared: BTreeSet<Var> = pre.vars();
    let posts = posts.iter().map(|q| simplify_post(q, &shared)).collect::<BTreeSet<_>>().into_iter().collect();
    Contract { pre, posts }
}

fn simplify_post(q: &SymHeap, shared: &BTreeSet<Var>) -> SymHeap {
    let mut q = q.clone();
    for _ in 0..64 {
        let Some((v, e)) = pick_subst(&q, shared) else { break };
        q = q.subst(&BTreeMap::from([(v, e)]));
    }
    loop {
        let drop = q.pure.iter().position(|p| {
            !p.vars().iter().any(|v| v.is_prog())
                && p.vars().iter().any(|v| v.is_plain_logical() && !shared.contains(v) && occurrences(&q, v) == 1)
        });
        match drop {
            Some(k) => {
                q.pure.remove(k);
            }
            None => break,
        }
    }
    // facts about logicals nothing else refers to: the post is satisfiable,
    // so their existential closure holds
    let mut local: BTreeSet<Var> = q
        .plain_logicals()
        .into_iter()
        .filter(|v| !shared.contains(v) && !q.spatial.iter().any(|a| a.mentions(v)))
        .collect();
    loop {
        let before = local.len();
        for p in &q.pure {
            let vs = p.vars();
            if !vs.is_subset(&local) {
                local.retain(|v| !vs.contains(v));
            }
        }
        if local.len() == before {
            break;
        }
    }
    q.pure.retain(|p| {
        let vs = p.vars();
        !(vs.is_empty() && ground_holds(p) || !vs.is_empty() && vs.is_subset(&local))
    });
    q
}

fn ground_holds(p: &Pure) -> bool {
    let val = |e: &Expr| match e {
        Expr::Num(n) => Some(Val::Int(*n)),
        Expr::Null => Some(Val::Null),
        _ => None,
    };
    match (val(&p.lhs), val(&p.rhs)) {
        (Some(a), Some(b)) => eval_cmp(p.op, a, b),
        _ => false,
    }
}

fn permutations(v: &[Var]) -> Vec<Vec<Var>> {
    if v.len() <= 1 {
        return vec![v.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..v.len() {
        let mut rest = v.to_vec();
        let x = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, x.clone());
            out.push(p);
        }
    }
    out
}

/// Atom texts of `h` with every plain logical replaced by its label.
fn labelled_atoms(h: &SymHeap, label: &dyn Fn(&Var) -> String) -> Vec<(BTreeSet<Var>, String)> {
    let map: BTreeMap<Var, Expr> =
        h.plain_logicals().into_iter().map(|v| (v.clone(), Expr::Var(Var::Prog(name(&label(&v)))))).collect();
    let mut out: Vec<(BTreeSet<Var>, String)> =
        h.pure.iter().map(|p| (p.vars(), p.subst(&|v| map.get(v).cloned()).to_string())).collect();
    out.extend(h.spatial.iter().map(|a| {
        let mut vs = BTreeSet::new();
        for v in h.plain_logicals() {
            if a.mentions(&v) {
                vs.insert(v);
            }
        }
        (vs, a.subst(&map).to_string())
    }));
    out
}

/// The contract with plain logicals renamed to `l1, l2, ...` so that
/// contracts equal up to renaming come out identical. Logicals are told
/// apart by refining their roles in the atoms; remaining ties are settled
/// by taking the smallest rendering.
pub fn canonical_contract(c: &Contract) -> Contract {
    let mut all: BTreeSet<Var> = c.pre.plain_logicals();
    for q in &c.posts {
        all.extend(q.plain_logicals());
    }
    let vars: Vec<Var> = all.into_iter().collect();
    let sections: Vec<(&str, &SymHeap)> =
        std::iter::once(("pre", &c.pre)).chain(c.posts.iter().map(|q| ("post", q))).collect();
    let mut color: BTreeMap<Var, usize> = vars.iter().map(|v| (v.clone(), 0)).collect();
    let mut classes = 1;
    for _ in 0..=vars.len() {
        let mut sigs: BTreeMap<Var, (usize, Vec<String>)> = BTreeMap::new();
        for v in &vars {
            let label = |w: &Var| if w == v { "@".to_string() } else { format!("c{}", color[w]) };
            let mut sig = Vec::new();
            for (tag, h) in &sections {
                for (vs, text) in labelled_atoms(h, &label) {
                    if vs.contains(v) {
                        sig.push(format!("{tag}:{text}"));
                    }
                }
            }
            sig.sort();
            sigs.insert(v.clone(), (color[v], sig));
        }
        let distinct: Vec<&(usize, Vec<String>)> = sigs.values().collect::<BTreeSet<_>>().into_iter().collect();
        color = sigs.iter().map(|(v, s)| (v.clone(), distinct.iter().position(|d| *d == s).unwrap())).collect();
        if distinct.len() == classes {
            break;
        }
        classes = distinct.len();
    }
    let mut groups: BTreeMap<usize, Vec<Var>> = BTreeMap::new();
    for v in &vars {
        groups.entry(color[v]).or_default().push(v.clone());
    }
    let render = |order: &[Var]| -> Contract {
        let map: BTreeMap<Var, Var> =
            order.iter().enumerate().map(|(i, v)| (v.clone(), Var::Logical(i as u32 + 1))).collect();
        let mut posts: Vec<SymHeap> = c.posts.iter().map(|q| q.rename(&map)).collect();
        posts.sort_by_key(|q| q.to_string());
        posts.dedup();
        Contract { pre: c.pre.rename(&map), posts }
    };
    // every ordering that keeps the classes in place, unless there are too many
    let mut orders: Vec<Vec<Var>> = vec![vec![]];
    for g in groups.values() {
        let perms = permutations(g);
        if orders.len() * perms.len() > 720 {
            orders.iter_mut().for_each(|o| o.extend(g.iter().cloned()));
            continue;
        }
        orders = orders
            .iter()
            .flat_map(|o| {
                perms.iter().map(move |p| {
                    let mut o = o.clone();
                    o.extend(p.iter().cloned());
                    o
                })
            })
            .collect();
    }
    orders.iter().map(|o| render(o)).min_by_key(contract_text).unwrap_or_else(|| c.clone())
}

fn contract_text(c: &Contract) -> String {
    let mut out = format!("pre: {}", c.pre);
    for p in &c.posts {
        out.push_str(&format!("\npost: {p}"));
    }
    out
}

/// Text form of `canonical_contract`, used for golden comparisons.
pub fn canonical(c: &Contract) -> String {
    contract_text(&canonical_contract(c))
}
