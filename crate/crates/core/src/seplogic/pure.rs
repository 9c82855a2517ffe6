//! Congruence closure over pure atoms with constant folding.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::term::{BinOp, Cmp, Expr, Pure, UnOp, Var};
use crate::memory::{eval_bin, eval_cmp, eval_un, Val};

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
enum Node {
    Var(Var),
    Const(Val),
    Un(UnOp, usize),
    Bin(BinOp, usize, usize),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Verdict {
    Sat,
    Unsat,
    Unknown,
}

/// Union-find over hash-consed terms. Disequalities and orderings are kept as
/// pairs of term ids and checked against the classes after every closure.
#[derive(Clone, Debug, Default)]
pub struct PureCtx {
    nodes: Vec<Node>,
    index: HashMap<Node, usize>,
    parent: Vec<usize>,
    konst: Vec<Option<Val>>,
    alloc: Vec<bool>,
    diseqs: Vec<(usize, usize)>,
    lts: Vec<(usize, usize)>,
    les: Vec<(usize, usize)>,
    unsat: bool,
    dirty: bool,
}

pub fn const_val(e: &Expr) -> Option<Val> {
    match e {
        Expr::Null => Some(Val::Null),
        Expr::Num(n) => Some(Val::Int(*n)),
        _ => None,
    }
}

pub fn val_expr(v: Val) -> Expr {
    match v {
        Val::Null => Expr::Null,
        Val::Int(n) => Expr::Num(n),
        Val::Loc(_) => unreachable!("locations have no syntax"),
    }
}

impl PureCtx {
    pub fn new() -> PureCtx {
        PureCtx::default()
    }

    pub fn from_atoms<'a>(atoms: impl IntoIterator<Item = &'a Pure>) -> PureCtx {
        let mut c = PureCtx::new();
        for a in atoms {
            c.assume(a);
        }
        c.close();
        c
    }

    pub fn is_unsat(&mut self) -> bool {
        self.close();
        self.unsat
    }

    fn find(&self, mut i: usize) -> usize {
        while self.parent[i] != i {
            i = self.parent[i];
        }
        i
    }

    fn add_node(&mut self, n: Node) -> usize {
        if let Some(&i) = self.index.get(&n) {
            return i;
        }
        let i = self.nodes.len();
        let k = match &n {
            Node::Const(v) => Some(*v),
            _ => None,
        };
        self.nodes.push(n.clone());
        self.index.insert(n, i);
        self.parent.push(i);
        self.konst.push(k);
        self.alloc.push(false);
        self.dirty = true;
        i
    }

    pub fn intern(&mut self, e: &Expr) -> usize {
        match e {
            Expr::Var(v) => self.add_node(Node::Var(v.clone())),
            Expr::Null => self.add_node(Node::Const(Val::Null)),
            Expr::Num(n) => self.add_node(Node::Const(Val::Int(*n))),
            Expr::Un(op, a) => {
                let a = self.intern(a);
                self.add_node(Node::Un(*op, a))
            }
            Expr::Bin(op, a, b) => {
                let a = self.intern(a);
                let b = self.intern(b);
                self.add_node(Node::Bin(*op, a, b))
            }
        }
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match (self.konst[ra], self.konst[rb]) {
            (Some(x), Some(y)) if x != y => self.unsat = true,
            (Some(x), _) => self.konst[rb] = Some(x),
            _ => {}
        }
        self.alloc[rb] = self.alloc[rb] || self.alloc[ra];
        self.parent[ra] = rb;
        self.dirty = true;
    }

    pub fn assume(&mut self, p: &Pure) {
        let a = self.intern(&p.lhs);
        let b = self.intern(&p.rhs);
        match p.op {
            Cmp::Eq => self.union(a, b),
            Cmp::Ne => self.diseqs.push((a, b)),
            Cmp::Le => self.les.push((a, b)),
            Cmp::Lt => self.lts.push((a, b)),
            Cmp::Ge => self.les.push((b, a)),
            Cmp::Gt => self.lts.push((b, a)),
        }
        self.dirty = true;
    }

    pub fn assume_eq(&mut self, a: &Expr, b: &Expr) {
        self.assume(&Pure::eq(a.clone(), b.clone()));
    }

    pub fn assume_ne(&mut self, a: &Expr, b: &Expr) {
        self.assume(&Pure::ne(a.clone(), b.clone()));
    }

    /// Mark a term as an allocated location: distinct from every constant.
    pub fn assume_alloc(&mut self, e: &Expr) {
        let i = self.intern(e);
        let r = self.find(i);
        self.alloc[r] = true;
        self.dirty = true;
    }

    pub fn close(&mut self) {
        if !self.dirty {
            return;
        }
        loop {
            let mut changed = false;
            // constant folding
            for i in 0..self.nodes.len() {
                let v = match self.nodes[i] {
                    Node::Un(op, a) => self.konst[self.find(a)].map(|x| eval_un(op, x)),
                    Node::Bin(op, a, b) => match (self.konst[self.find(a)], self.konst[self.find(b)]) {
                        (Some(x), Some(y)) => Some(eval_bin(op, x, y)),
                        _ => None,
                    },
                    _ => None,
                };
                if let Some(v) = v {
                    let r = self.find(i);
                    match self.konst[r] {
                        Some(w) if w != v => {
                            self.unsat = true;
                        }
                        Some(_) => {}
                        None => {
                            let c = self.add_node(Node::Const(v));
                            self.union(i, c);
                            changed = true;
                        }
                    }
                }
            }
            // congruence
            let mut sig: HashMap<(u8, u8, usize, usize), usize> = HashMap::new();
            for i in 0..self.nodes.len() {
                let key = match self.nodes[i] {
                    Node::Un(op, a) => (0, op as u8, self.find(a), 0),
                    Node::Bin(op, a, b) => (1, op as u8, self.find(a), self.find(b)),
                    _ => continue,
                };
                if let Some(&j) = sig.get(&key) {
                    if self.find(i) != self.find(j) {
                        self.union(i, j);
                        changed = true;
                    }
                } else {
                    sig.insert(key, i);
                }
            }
            if !changed {
                break;
            }
        }
        self.check_conflicts();
        self.dirty = false;
    }

    fn check_conflicts(&mut self) {
        for r in 0..self.nodes.len() {
            if self.find(r) == r && self.alloc[r] && self.konst[r].is_some() {
                self.unsat = true;
            }
        }
        for &(a, b) in &self.diseqs {
            let (ra, rb) = (self.find(a), self.find(b));
            if ra == rb {
                self.unsat = true;
            }
        }
        for &(a, b) in &self.lts {
            let (ra, rb) = (self.find(a), self.find(b));
            if ra == rb {
                self.unsat = true;
            }
            if let (Some(x), Some(y)) = (self.konst[ra], self.konst[rb]) {
                if !eval_cmp(Cmp::Lt, x, y) {
                    self.unsat = true;
                }
            }
        }
        for &(a, b) in &self.les {
            let (ra, rb) = (self.find(a), self.find(b));
            if let (Some(x), Some(y)) = (self.konst[ra], self.konst[rb]) {
                if !eval_cmp(Cmp::Le, x, y) {
                    self.unsat = true;
                }
            }
        }
    }

    fn root_of(&mut self, e: &Expr) -> usize {
        let i = self.intern(e);
        self.close();
        self.find(i)
    }

    pub fn const_of(&mut self, e: &Expr) -> Option<Val> {
        let r = self.root_of(e);
        self.konst[r]
    }

    pub fn proves_eq(&mut self, a: &Expr, b: &Expr) -> bool {
        let ra = self.root_of(a);
        let rb = self.root_of(b);
        self.unsat || ra == rb
    }

    pub fn proves_ne(&mut self, a: &Expr, b: &Expr) -> bool {
        let ra = self.root_of(a);
        let rb = self.root_of(b);
        if self.unsat {
            return true;
        }
        if ra == rb {
            return false;
        }
        if let (Some(x), Some(y)) = (self.konst[ra], self.konst[rb]) {
            return x != y;
        }
        if (self.alloc[ra] && self.konst[rb].is_some()) || (self.alloc[rb] && self.konst[ra].is_some()) {
            return true;
        }
        let same = |x: usize, y: usize| (x == ra && y == rb) || (x == rb && y == ra);
        self.diseqs.iter().any(|&(x, y)| same(self.find(x), self.find(y)))
            || self.lts.iter().any(|&(x, y)| same(self.find(x), self.find(y)))
    }

    pub fn proves_alloc(&mut self, a: &Expr) -> bool {
        let r = self.root_of(a);
        self.unsat || self.alloc[r]
    }

    fn proves_ord(&mut self, strict: bool, a: &Expr, b: &Expr) -> bool {
        let ra = self.root_of(a);
        let rb = self.root_of(b);
        if self.unsat {
            return true;
        }
        if !strict && ra == rb {
            return true;
        }
        if let (Some(x), Some(y)) = (self.konst[ra], self.konst[rb]) {
            return eval_cmp(if strict { Cmp::Lt } else { Cmp::Le }, x, y);
        }
        let hit = |list: &Vec<(usize, usize)>| list.iter().any(|&(x, y)| self.find(x) == ra && self.find(y) == rb);
        if hit(&self.lts) {
            return true;
        }
        !strict && hit(&self.les)
    }

    pub fn proves(&mut self, p: &Pure) -> bool {
        match p.op {
            Cmp::Eq => self.proves_eq(&p.lhs, &p.rhs),
            Cmp::Ne => self.proves_ne(&p.lhs, &p.rhs),
            Cmp::Le => self.proves_ord(false, &p.lhs, &p.rhs),
            Cmp::Lt => self.proves_ord(true, &p.lhs, &p.rhs),
            Cmp::Ge => self.proves_ord(false, &p.rhs, &p.lhs),
            Cmp::Gt => self.proves_ord(true, &p.rhs, &p.lhs),
        }
    }

    /// A representative expression for `e`'s class: a constant if the class
    /// has one, else the smallest variable by `rank`.
    pub fn representative(&mut self, e: &Expr, rank: &dyn Fn(&Var) -> Option<u32>) -> Expr {
        let r = self.root_of(e);
        if let Some(v) = self.konst[r] {
            return val_expr(v);
        }
        let mut best: Option<(u32, &Var)> = None;
        for (i, n) in self.nodes.iter().enumerate() {
            if let Node::Var(v) = n {
                if self.find(i) == r {
                    if let Some(k) = rank(v) {
                        if best.is_none_or(|(bk, bv)| (k, v) < (bk, bv)) {
                            best = Some((k, v));
                        }
                    }
                }
            }
        }
        match best {
            Some((_, v)) => Expr::Var(v.clone()),
            None => e.clone(),
        }
    }

    /// Variables in the same class as `e`.
    pub fn class_vars(&mut self, e: &Expr) -> Vec<Var> {
        let r = self.root_of(e);
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n {
                Node::Var(v) if self.find(i) == r => Some(v.clone()),
                _ => None,
            })
            .collect()
    }
}

/// Decide satisfiability of a conjunction of pure atoms.
pub fn pure_sat(atoms: &[Pure]) -> Verdict {
    pure_sat_with(atoms, &[])
}

/// Like `pure_sat`, with some terms required to denote allocated locations.
pub fn pure_sat_with(atoms: &[Pure], allocated: &[Expr]) -> Verdict {
    let mut ctx = PureCtx::from_atoms(atoms);
    for a in allocated {
        ctx.assume_alloc(a);
    }
    if ctx.is_unsat() {
        return Verdict::Unsat;
    }
    let vars: BTreeSet<Var> = atoms.iter().flat_map(|a| a.vars()).collect();
    let alloc_vars: BTreeSet<Var> = allocated.iter().flat_map(|e| e.vars()).collect();
    if let Some(w) = greedy_witness(&mut ctx, &vars, &alloc_vars) {
        if check_witness(atoms, allocated, &w) {
            return Verdict::Sat;
        }
    }
    if brute_force(atoms, allocated, &mut ctx, &vars) {
        return Verdict::Sat;
    }
    Verdict::Unknown
}

fn eval_with(e: &Expr, w: &BTreeMap<Var, Val>) -> Option<Val> {
    Some(match e {
        Expr::Var(v) => *w.get(v)?,
        Expr::Null => Val::Null,
        Expr::Num(n) => Val::Int(*n),
        Expr::Un(op, a) => eval_un(*op, eval_with(a, w)?),
        Expr::Bin(op, a, b) => eval_bin(*op, eval_with(a, w)?, eval_with(b, w)?),
    })
}

fn check_witness(atoms: &[Pure], allocated: &[Expr], w: &BTreeMap<Var, Val>) -> bool {
    atoms.iter().all(|a| match (eval_with(&a.lhs, w), eval_with(&a.rhs, w)) {
        (Some(x), Some(y)) => eval_cmp(a.op, x, y),
        _ => false,
    }) && allocated.iter().all(|e| matches!(eval_with(e, w), Some(Val::Loc(_))))
}

/// Classes without a constant get distinct fresh values, ordered along the
/// recorded orderings; classes defined by a compound term get its value.
fn greedy_witness(ctx: &mut PureCtx, vars: &BTreeSet<Var>, alloc_vars: &BTreeSet<Var>) -> Option<BTreeMap<Var, Val>> {
    ctx.close();
    let n = ctx.nodes.len();
    let roots: Vec<usize> = (0..n).map(|i| ctx.find(i)).collect();
    let mut val: Vec<Option<Val>> = vec![None; n];
    for r in 0..n {
        if roots[r] == r {
            val[r] = ctx.konst[r];
        }
    }
    // Order free classes: a class that must be below another gets a smaller value.
    let free: Vec<usize> =
        (0..n).filter(|&r| roots[r] == r && val[r].is_none() && !defined_by_compound(ctx, r, &roots)).collect();
    let mut below: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for &(a, b) in ctx.lts.iter().chain(ctx.les.iter()) {
        below.entry(roots[b]).or_default().insert(roots[a]);
    }
    let mut order: Vec<usize> = Vec::new();
    let mut placed: BTreeSet<usize> = BTreeSet::new();
    let mut guard = 0;
    while order.len() < free.len() && guard <= free.len() + 1 {
        guard += 1;
        for &r in &free {
            if placed.contains(&r) {
                continue;
            }
            let ready = below.get(&r).is_none_or(|s| s.iter().all(|x| !free.contains(x) || placed.contains(x)));
            if ready {
                placed.insert(r);
                order.push(r);
            }
        }
    }
    for &r in &free {
        if !placed.contains(&r) {
            order.push(r);
        }
    }
    let alloc_roots: BTreeSet<usize> = (0..n)
        .filter(|&i| matches!(&ctx.nodes[i], Node::Var(v) if alloc_vars.contains(v)) || ctx.alloc[roots[i]])
        .map(|i| roots[i])
        .collect();
    for (k, r) in order.iter().enumerate() {
        val[*r] =
            Some(if alloc_roots.contains(r) { Val::Loc(1000 + k as u32) } else { Val::Int(1000 + 16 * k as i64) });
    }
    // compound-defined classes, evaluated until stable
    for _ in 0..n + 1 {
        let mut progress = false;
        for i in 0..n {
            let r = roots[i];
            if val[r].is_some() {
                continue;
            }
            let v = match ctx.nodes[i] {
                Node::Un(op, a) => val[roots[a]].map(|x| eval_un(op, x)),
                Node::Bin(op, a, b) => match (val[roots[a]], val[roots[b]]) {
                    (Some(x), Some(y)) => Some(eval_bin(op, x, y)),
                    _ => None,
                },
                _ => None,
            };
            if v.is_some() {
                val[r] = v;
                progress = true;
            }
        }
        if !progress {
            break;
        }
    }
    let mut w = BTreeMap::new();
    for v in vars.iter().chain(alloc_vars.iter()) {
        let i = *ctx.index.get(&Node::Var(v.clone()))?;
        w.insert(v.clone(), val[roots[i]]?);
    }
    Some(w)
}

fn defined_by_compound(ctx: &PureCtx, r: usize, roots: &[usize]) -> bool {
    (0..ctx.nodes.len()).any(|i| roots[i] == r && matches!(ctx.nodes[i], Node::Un(..) | Node::Bin(..)))
}

fn brute_force(atoms: &[Pure], allocated: &[Expr], ctx: &mut PureCtx, vars: &BTreeSet<Var>) -> bool {
    // one representative variable per class
    let mut reps: Vec<Var> = Vec::new();
    let mut seen: BTreeSet<usize> = BTreeSet::new();
    for v in vars {
        let r = ctx.root_of(&Expr::Var(v.clone()));
        if seen.insert(r) {
            reps.push(v.clone());
        }
    }
    if reps.len() > 5 {
        return false;
    }
    let domain = [Val::Null, Val::Int(0), Val::Int(1), Val::Int(2), Val::Int(3), Val::Loc(1), Val::Loc(2), Val::Loc(3)];
    let class_of: Vec<(Var, usize)> = vars
        .iter()
        .map(|v| {
            let r = ctx.root_of(&Expr::Var(v.clone()));
            let k = reps.iter().position(|x| ctx.root_of(&Expr::Var(x.clone())) == r).unwrap();
            (v.clone(), k)
        })
        .collect();
    let mut idx = vec![0usize; reps.len()];
    loop {
        let w: BTreeMap<Var, Val> = class_of.iter().map(|(v, k)| (v.clone(), domain[idx[*k]])).collect();
        if check_witness(atoms, allocated, &w) {
            return true;
        }
        let mut k = 0;
        loop {
            if k == idx.len() {
                return false;
            }
            idx[k] += 1;
            if idx[k] < domain.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}
