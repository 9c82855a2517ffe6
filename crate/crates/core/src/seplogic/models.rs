//! Concrete semantics of formulas: a model checker and a bounded model enumerator.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::formula::{Block, Spatial, SymHeap};
use super::term::{Expr, Name, Pure, Var};
use crate::memory::{eval_bin, eval_cmp, eval_un, Config, Heap, Val};

/// Location pool size shared with the interpreter.
pub const LOC_POOL: u32 = 8;

pub fn eval(e: &Expr, env: &BTreeMap<Var, Val>) -> Option<Val> {
    Some(match e {
        Expr::Var(v) => *env.get(v)?,
        Expr::Null => Val::Null,
        Expr::Num(n) => Val::Int(*n),
        Expr::Un(op, a) => eval_un(*op, eval(a, env)?),
        Expr::Bin(op, a, b) => eval_bin(*op, eval(a, env)?, eval(b, env)?),
    })
}

fn holds(p: &Pure, env: &BTreeMap<Var, Val>) -> Option<bool> {
    Some(eval_cmp(p.op, eval(&p.lhs, env)?, eval(&p.rhs, env)?))
}

struct Search {
    pool: Vec<Val>,
    next_internal: u32,
    budget: usize,
}

#[derive(Clone)]
struct State {
    env: BTreeMap<Var, Val>,
    heap: Heap,
    atoms: Vec<Spatial>,
    pure: Vec<Pure>,
}

/// `conf |= h`. Variables missing from the stack are existential; witnesses
/// range over the configuration's values plus NULL and 0..=3.
pub fn models(conf: &Config, h: &SymHeap) -> bool {
    let mut pool: BTreeSet<Val> = [Val::Null, Val::Int(0), Val::Int(1), Val::Int(2), Val::Int(3)].into();
    pool.extend(conf.stack.values().copied());
    pool.extend(conf.heap.values().copied());
    pool.extend(conf.heap.keys().map(|(l, _)| Val::Loc(*l)));
    let mut s = Search { pool: pool.into_iter().collect(), next_internal: u32::MAX - 1_000_000, budget: 200_000 };
    let st = State { env: conf.stack.clone(), heap: conf.heap.clone(), atoms: h.spatial.clone(), pure: h.pure.clone() };
    s.go(st)
}

/// Like `models`, returning the completed environment.
pub fn models_witness(conf: &Config, h: &SymHeap) -> Option<BTreeMap<Var, Val>> {
    let mut pool: BTreeSet<Val> = [Val::Null, Val::Int(0), Val::Int(1), Val::Int(2), Val::Int(3)].into();
    pool.extend(conf.stack.values().copied());
    pool.extend(conf.heap.values().copied());
    pool.extend(conf.heap.keys().map(|(l, _)| Val::Loc(*l)));
    let mut s = Search { pool: pool.into_iter().collect(), next_internal: u32::MAX - 1_000_000, budget: 200_000 };
    let st = State { env: conf.stack.clone(), heap: conf.heap.clone(), atoms: h.spatial.clone(), pure: h.pure.clone() };
    s.go_witness(st)
}

impl Search {
    fn go(&mut self, st: State) -> bool {
        self.go_witness(st).is_some()
    }

    fn go_witness(&mut self, mut st: State) -> Option<BTreeMap<Var, Val>> {
        if self.budget == 0 {
            return None;
        }
        self.budget -= 1;
        // prune on fully evaluable pure atoms
        for p in &st.pure {
            if holds(p, &st.env) == Some(false) {
                return None;
            }
        }
        if st.atoms.is_empty() {
            if !st.heap.is_empty() {
                return None;
            }
            return self.finish_pure(st);
        }
        // prefer an atom whose source is known
        let k = st.atoms.iter().position(|a| st.env.contains_key(a.source()));
        let Some(k) = k else {
            let v = st.atoms[0].source().clone();
            let mut cands: BTreeSet<Val> = st.heap.keys().map(|(l, _)| Val::Loc(*l)).collect();
            cands.extend(self.pool.iter().copied());
            for c in cands {
                let mut s2 = st.clone();
                s2.env.insert(v.clone(), c);
                if let Some(w) = self.go_witness(s2) {
                    return Some(w);
                }
            }
            return None;
        };
        let atom = st.atoms.remove(k);
        let src = st.env[atom.source()];
        match atom {
            Spatial::PointsTo { field, val, .. } => {
                let Val::Loc(l) = src else { return None };
                let cell = st.heap.remove(&(l, field))?;
                self.bind(st, &val, cell)
            }
            Spatial::Seg { block, tail, head } => {
                if let Some(w) = self.bind(st.clone(), &tail, src) {
                    return Some(w);
                }
                // nonempty: the head must own its head-field cells
                let Val::Loc(l) = src else { return None };
                if !block.head_fields().iter().all(|f| st.heap.contains_key(&(l, f.clone()))) {
                    return None;
                }
                self.unfold_nonempty(st, &block, &head, &tail)
            }
        }
    }

    fn unfold_nonempty(
        &mut self,
        mut st: State,
        block: &Arc<Block>,
        head: &Var,
        tail: &Expr,
    ) -> Option<BTreeMap<Var, Val>> {
        let u = self.fresh();
        let (atoms, _) = {
            let mut mk = || self.fresh_var();
            block.instantiate(head, &Expr::Var(u.clone()), &mut mk)
        };
        st.pure.push(Pure::ne(Expr::Var(head.clone()), tail.clone()));
        st.atoms.extend(atoms);
        st.atoms.push(Spatial::Seg { block: block.clone(), head: u, tail: tail.clone() });
        self.go_witness(st)
    }

    fn fresh(&mut self) -> Var {
        self.fresh_var()
    }

    fn fresh_var(&mut self) -> Var {
        self.next_internal += 1;
        Var::Logical(self.next_internal)
    }

    /// Make `e` evaluate to `v`, binding `e` if it is an unbound variable.
    fn bind(&mut self, mut st: State, e: &Expr, v: Val) -> Option<BTreeMap<Var, Val>> {
        match e {
            Expr::Var(x) if !st.env.contains_key(x) => {
                st.env.insert(x.clone(), v);
                self.go_witness(st)
            }
            _ => match eval(e, &st.env) {
                Some(w) if w == v => self.go_witness(st),
                Some(_) => None,
                None => {
                    // compound with unknowns: defer as a pure constraint
                    let c = const_expr(v, &mut st);
                    st.pure.push(Pure::eq(e.clone(), c));
                    self.go_witness(st)
                }
            },
        }
    }

    fn finish_pure(&mut self, st: State) -> Option<BTreeMap<Var, Val>> {
        let open: Vec<Var> = st
            .pure
            .iter()
            .flat_map(|p| p.vars())
            .filter(|v| !st.env.contains_key(v))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if open.is_empty() {
            return if st.pure.iter().all(|p| holds(p, &st.env) == Some(true)) { Some(st.env) } else { None };
        }
        let v = open[0].clone();
        for c in self.pool.clone() {
            let mut s2 = st.clone();
            s2.env.insert(v.clone(), c);
            if s2.pure.iter().any(|p| holds(p, &s2.env) == Some(false)) {
                continue;
            }
            if let Some(w) = self.finish_pure(s2) {
                return Some(w);
            }
        }
        None
    }
}

/// Constants with no syntax (locations) are bound to a private variable.
fn const_expr(v: Val, st: &mut State) -> Expr {
    match v {
        Val::Null => Expr::Null,
        Val::Int(n) => Expr::Num(n),
        Val::Loc(_) => {
            let name = Var::Logical(u32::MAX - 2_000_000 + st.env.len() as u32);
            st.env.insert(name.clone(), v);
            Expr::Var(name)
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Bounds {
    pub max_cells: usize,
    pub value_range: i64,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds { max_cells: 4, value_range: 3 }
    }
}

#[derive(Clone, Debug, Default)]
struct Expansion {
    pts: Vec<(Var, Name, Expr)>,
    pure: Vec<Pure>,
    internals: BTreeSet<Var>,
}

struct Expander {
    next: u32,
    limit: usize,
}

impl Expander {
    fn fresh(&mut self) -> Var {
        self.next += 1;
        Var::Logical(self.next)
    }

    /// All ways to unfold the segments in `atoms` within the cell budget.
    fn expand(&mut self, atoms: &[Spatial], acc: Expansion, out: &mut Vec<Expansion>) {
        if out.len() >= self.limit {
            return;
        }
        let Some((first, rest)) = atoms.split_first() else {
            out.push(acc);
            return;
        };
        match first {
            Spatial::PointsTo { src, field, val } => {
                let mut a = acc;
                a.pts.push((src.clone(), field.clone(), val.clone()));
                if a.pts.len() > MAX_EXPANDED_CELLS {
                    return;
                }
                self.expand(rest, a, out);
            }
            Spatial::Seg { block, head, tail } => {
                // empty
                let mut a = acc.clone();
                a.pure.push(Pure::eq(Expr::Var(head.clone()), tail.clone()));
                self.expand(rest, a, out);
                // one instance, then the rest of the segment
                let need = block.atoms.len();
                if acc.pts.len() + need > MAX_EXPANDED_CELLS {
                    return;
                }
                let mut a = acc;
                let u = self.fresh();
                a.internals.insert(u.clone());
                let mut internals = Vec::new();
                let (inst, _) = {
                    let mut mk = || {
                        self.next += 1;
                        let v = Var::Logical(self.next);
                        internals.push(v.clone());
                        v
                    };
                    block.instantiate(head, &Expr::Var(u.clone()), &mut mk)
                };
                a.internals.extend(internals);
                a.pure.push(Pure::ne(Expr::Var(head.clone()), tail.clone()));
                let mut more: Vec<Spatial> = inst;
                more.push(Spatial::Seg { block: block.clone(), head: u, tail: tail.clone() });
                more.extend(rest.iter().cloned());
                self.expand(&more, a, out);
            }
        }
    }
}

const MAX_EXPANDED_CELLS: usize = 12;

/// Bounded models of `h`, exhaustive up to `bounds.max_cells` heap cells over
/// a canonical naming of locations (lowest unused id first). `extra` lists
/// variables to bind even if `h` does not mention them.
pub fn enumerate_models(h: &SymHeap, bounds: Bounds, extra: &[Var]) -> Vec<Config> {
    let mut ex = Expander { next: h.max_logical().max(1_000_000), limit: 20_000 };
    let mut expansions = Vec::new();
    ex.expand(&h.spatial, Expansion::default(), &mut expansions);
    let mut visible: BTreeSet<Var> = h.vars();
    visible.extend(extra.iter().cloned());
    let mut out: BTreeSet<Config> = BTreeSet::new();
    for e in expansions {
        if e.pts.len() > bounds.max_cells {
            continue;
        }
        let mut pure = h.pure.clone();
        pure.extend(e.pure.iter().cloned());
        let mut vars: BTreeSet<Var> = visible.clone();
        vars.extend(e.internals.iter().cloned());
        for p in &pure {
            vars.extend(p.vars());
        }
        for (s, _, v) in &e.pts {
            vars.insert(s.clone());
            vars.extend(v.vars());
        }
        let sources: BTreeSet<Var> = e.pts.iter().map(|(s, _, _)| s.clone()).collect();
        let mut gen = Gen {
            pts: &e.pts,
            pure: &pure,
            sources: &sources,
            range: bounds.value_range,
            visible: &visible,
            out: &mut out,
            budget: 200_000,
        };
        let order = assignment_order(&vars, &sources, &pure);
        gen.run(&order, 0, BTreeMap::new(), 0);
    }
    out.into_iter().collect()
}

/// Variables with a defining equation `v = e` come after the variables of `e`
/// and are computed instead of enumerated.
fn assignment_order(vars: &BTreeSet<Var>, sources: &BTreeSet<Var>, pure: &[Pure]) -> Vec<(Var, Option<Expr>)> {
    let mut defs: BTreeMap<Var, Expr> = BTreeMap::new();
    for p in pure {
        if let Some((v, e)) = p.as_var_eq() {
            if !sources.contains(v) && !defs.contains_key(v) && !e.mentions(v) && !matches!(e, Expr::Var(_)) {
                defs.insert(v.clone(), e.clone());
            }
        }
    }
    let mut order: Vec<(Var, Option<Expr>)> = Vec::new();
    let mut placed: BTreeSet<Var> = BTreeSet::new();
    // sources first, they are the most constrained
    for v in vars.iter().filter(|v| sources.contains(v)) {
        order.push((v.clone(), None));
        placed.insert(v.clone());
    }
    for v in vars.iter().filter(|v| !sources.contains(v) && !defs.contains_key(v)) {
        order.push((v.clone(), None));
        placed.insert(v.clone());
    }
    let mut pending: Vec<Var> = defs.keys().cloned().collect();
    while !pending.is_empty() {
        let before = pending.len();
        pending.retain(|v| {
            let e = &defs[v];
            if e.vars().iter().all(|w| placed.contains(w) || !vars.contains(w)) {
                order.push((v.clone(), Some(e.clone())));
                placed.insert(v.clone());
                false
            } else {
                true
            }
        });
        if pending.len() == before {
            // cyclic definitions: enumerate them
            for v in pending.drain(..) {
                order.push((v, None));
            }
        }
    }
    order
}

struct Gen<'a> {
    pts: &'a [(Var, Name, Expr)],
    pure: &'a [Pure],
    sources: &'a BTreeSet<Var>,
    range: i64,
    visible: &'a BTreeSet<Var>,
    out: &'a mut BTreeSet<Config>,
    budget: usize,
}

impl Gen<'_> {
    fn consistent(&self, env: &BTreeMap<Var, Val>) -> bool {
        if self.pure.iter().any(|p| holds(p, env) == Some(false)) {
            return false;
        }
        let mut cells: BTreeSet<(u32, &Name)> = BTreeSet::new();
        for (s, f, _) in self.pts {
            if let Some(v) = env.get(s) {
                let Val::Loc(l) = v else { return false };
                if !cells.insert((*l, f)) {
                    return false;
                }
            }
        }
        true
    }

    fn run(&mut self, order: &[(Var, Option<Expr>)], k: usize, env: BTreeMap<Var, Val>, used: u32) {
        if self.budget == 0 {
            return;
        }
        self.budget -= 1;
        if k == order.len() {
            if !self.pure.iter().all(|p| holds(p, &env) == Some(true)) {
                return;
            }
            let mut heap = Heap::new();
            for (s, f, v) in self.pts {
                let Some(Val::Loc(l)) = env.get(s).copied() else { return };
                let Some(val) = eval(v, &env) else { return };
                heap.insert((l, f.clone()), val);
            }
            let stack = env.iter().filter(|(v, _)| self.visible.contains(*v)).map(|(k, v)| (k.clone(), *v)).collect();
            self.out.insert(Config { stack, heap });
            return;
        }
        let (v, def) = &order[k];
        let cands: Vec<Val> = match def {
            Some(e) => match eval(e, &env) {
                Some(x) => vec![x],
                None => return,
            },
            None => {
                let mut c: Vec<Val> = (1..=used).map(Val::Loc).collect();
                if used < LOC_POOL {
                    c.push(Val::Loc(used + 1));
                }
                if !self.sources.contains(v) {
                    c.push(Val::Null);
                    c.extend((0..=self.range).map(Val::Int));
                }
                c
            }
        };
        for c in cands {
            let mut e2 = env.clone();
            e2.insert(v.clone(), c);
            if !self.consistent(&e2) {
                continue;
            }
            let used2 = match c {
                Val::Loc(l) => used.max(l),
                _ => used,
            };
            self.run(order, k + 1, e2, used2);
        }
    }
}
