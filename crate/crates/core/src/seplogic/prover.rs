//! Entailment by subtraction. The same matcher runs in abduction mode, where
//! unmatched demands are collected instead of failing.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::formula::{Block, Fresh, Spatial, SymHeap};
use super::heapctx::HeapCtx;
use super::term::{Cmp, Expr, Name, Pure, Var};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Mode {
    Entail,
    Abduce,
}

#[derive(Clone)]
struct Snapshot {
    lhs: Vec<Spatial>,
    used: Vec<bool>,
    lhs_pure: Vec<Pure>,
    ctx: HeapCtx,
    assign: BTreeMap<Var, Expr>,
    exists: BTreeSet<Var>,
}

enum Piece {
    Seg { atom: usize, head: Expr, tail: Expr },
    Inst { head: Expr },
}

struct Prover<'f> {
    mode: Mode,
    lhs: Vec<Spatial>,
    used: Vec<bool>,
    lhs_pure: Vec<Pure>,
    ctx: HeapCtx,
    exists: BTreeSet<Var>,
    assign: BTreeMap<Var, Expr>,
    fresh: &'f mut Fresh,
    missing_pure: Vec<Pure>,
    missing_spatial: Vec<Spatial>,
    missing_at: Vec<usize>,
    bindings: Vec<Pure>,
    budget: usize,
}

#[derive(Clone, Debug)]
pub struct Entailment {
    pub proved: bool,
    /// Unconsumed left-hand atoms (meaningful only when proved).
    pub frame: SymHeap,
}

/// Result of matching a demand against a state in abduction mode.
#[derive(Clone, Debug)]
pub struct Abduction {
    pub missing: SymHeap,
    /// The state after any unfolding, plus program-variable bindings it had to invent.
    pub state: SymHeap,
    pub consumed: Vec<Spatial>,
    pub frame: Vec<Spatial>,
    pub assign: BTreeMap<Var, Expr>,
    pub bindings: Vec<Pure>,
}

impl<'f> Prover<'f> {
    fn new(mode: Mode, lhs: &SymHeap, exists: BTreeSet<Var>, fresh: &'f mut Fresh) -> Prover<'f> {
        Prover {
            mode,
            lhs: lhs.spatial.clone(),
            used: vec![false; lhs.spatial.len()],
            lhs_pure: lhs.pure.clone(),
            ctx: HeapCtx::of(lhs),
            exists,
            assign: BTreeMap::new(),
            fresh,
            missing_pure: vec![],
            missing_spatial: vec![],
            missing_at: vec![],
            bindings: vec![],
            budget: 400,
        }
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot {
            lhs: self.lhs.clone(),
            used: self.used.clone(),
            lhs_pure: self.lhs_pure.clone(),
            ctx: self.ctx.clone(),
            assign: self.assign.clone(),
            exists: self.exists.clone(),
        }
    }

    fn restore(&mut self, s: Snapshot) {
        self.lhs = s.lhs;
        self.used = s.used;
        self.lhs_pure = s.lhs_pure;
        self.ctx = s.ctx;
        self.assign = s.assign;
        self.exists = s.exists;
    }

    fn rebuild(&mut self) {
        let mut pure = self.lhs_pure.clone();
        pure.extend(self.missing_pure.iter().cloned());
        self.ctx = HeapCtx::build(&pure, &self.lhs);
    }

    fn resolve(&self, e: &Expr) -> Expr {
        e.subst(&|v| self.assign.get(v).cloned())
    }

    fn resolve_var(&self, v: &Var) -> Expr {
        self.assign.get(v).cloned().unwrap_or_else(|| Expr::Var(v.clone()))
    }

    fn open_var(&self, v: &Var) -> bool {
        self.exists.contains(v) && !self.assign.contains_key(v)
    }

    fn has_open(&self, e: &Expr) -> bool {
        e.vars().iter().any(|v| self.open_var(v))
    }

    fn new_exist(&mut self) -> Var {
        let v = self.fresh.var();
        self.exists.insert(v.clone());
        v
    }

    /// Give every open existential in `e` a fresh value of its own.
    /// Close every open existential in `e`, keeping its name unless the
    /// left-hand side already uses it.
    fn close_open(&mut self, e: &Expr) {
        for v in e.vars() {
            if self.open_var(&v) {
                let taken = self.lhs.iter().any(|a| a.mentions(&v)) || self.lhs_pure.iter().any(|p| p.mentions(&v));
                let f = if taken { self.fresh.expr() } else { Expr::Var(v.clone()) };
                self.assign.insert(v, f);
            }
        }
    }

    fn add_missing_pure(&mut self, p: Pure) {
        self.ctx.assume(&p);
        self.missing_pure.push(p);
    }

    fn unify(&mut self, rhs: &Expr, lhs: &Expr) -> bool {
        let r = self.resolve(rhs);
        if let Expr::Var(v) = &r {
            if self.open_var(v) {
                self.assign.insert(v.clone(), lhs.clone());
                return true;
            }
        }
        if self.has_open(&r) {
            if self.mode == Mode::Entail {
                return false;
            }
            self.close_open(&r);
        }
        let r = self.resolve(&r);
        if self.ctx.proves_eq(&r, lhs) {
            return true;
        }
        if self.mode == Mode::Abduce {
            self.add_missing_pure(Pure::eq(r, lhs.clone()));
            return true;
        }
        false
    }

    fn prog_binding(&self, x: &Var) -> Option<Expr> {
        self.lhs_pure.iter().find_map(|p| match p.as_var_eq() {
            Some((v, e)) if v == x => Some(e.clone()),
            _ => None,
        })
    }

    fn unfold(&mut self, i: usize) {
        let Spatial::Seg { block, head, tail } = self.lhs[i].clone() else {
            return;
        };
        let u = self.fresh.var();
        let fresh = &mut *self.fresh;
        let (atoms, _) = block.instantiate(&head, &Expr::Var(u.clone()), &mut || fresh.var());
        self.lhs_pure.push(Pure::ne(Expr::Var(head.clone()), tail.clone()));
        let mut it = atoms.into_iter();
        self.lhs[i] = it.next().expect("blocks are nonempty");
        for a in it {
            self.lhs.push(a);
            self.used.push(false);
        }
        self.lhs.push(Spatial::Seg { block, head: u, tail });
        self.used.push(false);
        self.rebuild();
    }

    fn match_pts(&mut self, src: &Expr, field: &Name, val: &Expr) -> bool {
        loop {
            if self.budget == 0 {
                return false;
            }
            self.budget -= 1;
            let mut hit = None;
            for i in 0..self.lhs.len() {
                if self.used[i] {
                    continue;
                }
                if let Spatial::PointsTo { src: s, field: f, .. } = &self.lhs[i] {
                    if f == field {
                        let s = Expr::Var(s.clone());
                        if self.ctx.proves_eq(src, &s) {
                            hit = Some(i);
                            break;
                        }
                    }
                }
            }
            if let Some(i) = hit {
                self.used[i] = true;
                let Spatial::PointsTo { val: v, .. } = self.lhs[i].clone() else { unreachable!() };
                return self.unify(val, &v);
            }
            let mut seg = None;
            for i in 0..self.lhs.len() {
                if self.used[i] {
                    continue;
                }
                if let Spatial::Seg { block, head, .. } = &self.lhs[i] {
                    if block.head_fields().contains(field) && self.ctx.proves_eq(src, &Expr::Var(head.clone())) {
                        seg = Some(i);
                        break;
                    }
                }
            }
            if let Some(i) = seg {
                let Spatial::Seg { head, tail, .. } = self.lhs[i].clone() else { unreachable!() };
                if self.ctx.proves_ne(&Expr::Var(head), &tail) {
                    self.unfold(i);
                    continue;
                }
                return false;
            }
            if self.mode == Mode::Entail {
                return false;
            }
            let Expr::Var(sv) = src.clone() else { return false };
            self.close_open(val);
            let v = self.resolve(val);
            let atom = Spatial::PointsTo { src: sv, field: field.clone(), val: v };
            self.missing_spatial.push(atom.clone());
            self.missing_at.push(self.lhs.len());
            self.lhs.push(atom);
            self.used.push(true);
            self.rebuild();
            return !self.ctx.is_unsat();
        }
    }

    fn sourced_at(&mut self, cur: &Expr, fields: &BTreeSet<Name>) -> bool {
        for i in 0..self.lhs.len() {
            if self.used[i] {
                continue;
            }
            let (s, fs) = match &self.lhs[i] {
                Spatial::PointsTo { src, field, .. } => (src.clone(), BTreeSet::from([field.clone()])),
                Spatial::Seg { block, head, .. } => (head.clone(), block.head_fields()),
            };
            if fs.intersection(fields).next().is_some() && self.ctx.proves_eq(cur, &Expr::Var(s)) {
                return true;
            }
        }
        false
    }

    fn match_instance(&mut self, block: &Arc<Block>, cur: &Var) -> Option<Expr> {
        let snap = self.snapshot();
        let mode = self.mode;
        self.mode = Mode::Entail;
        let u = self.new_exist();
        let mut internals = Vec::new();
        let (atoms, _) = {
            let mut mk = || {
                let v = self.fresh.var();
                internals.push(v.clone());
                v
            };
            block.instantiate(cur, &Expr::Var(u.clone()), &mut mk)
        };
        self.exists.extend(internals);
        let ok = self.match_all(atoms);
        self.mode = mode;
        let next = self.resolve_var(&u);
        if !ok || self.has_open(&next) {
            self.restore(snap);
            return None;
        }
        Some(next)
    }

    fn match_seg(&mut self, block: &Arc<Block>, head: &Expr, tail: &Expr) -> bool {
        let mut tail_r = self.resolve(tail);
        let mut cur = head.clone();
        let mut pieces: Vec<Piece> = Vec::new();
        let fields = block.head_fields();
        loop {
            if self.budget == 0 {
                return false;
            }
            self.budget -= 1;
            if !self.has_open(&tail_r) && self.ctx.proves_eq(&cur, &tail_r) {
                break;
            }
            let open_tail = self.has_open(&tail_r);
            if open_tail && !pieces.is_empty() {
                break;
            }
            // a segment of the same block starting here
            let mut seg = None;
            for i in 0..self.lhs.len() {
                if self.used[i] {
                    continue;
                }
                if let Spatial::Seg { block: b, head: h, .. } = &self.lhs[i] {
                    if b == block && self.ctx.proves_eq(&cur, &Expr::Var(h.clone())) {
                        seg = Some(i);
                        break;
                    }
                }
            }
            if let Some(i) = seg {
                let Spatial::Seg { head: h, tail: t, .. } = self.lhs[i].clone() else { unreachable!() };
                self.used[i] = true;
                pieces.push(Piece::Seg { atom: i, head: Expr::Var(h), tail: t.clone() });
                if open_tail {
                    if !self.unify(&tail_r, &t) {
                        return false;
                    }
                    tail_r = self.resolve(&tail_r);
                }
                cur = t;
                continue;
            }
            let Expr::Var(cv) = cur.clone() else { return false };
            if !open_tail && self.sourced_at(&cur, &fields) {
                if let Some(next) = self.match_instance(block, &cv) {
                    pieces.push(Piece::Inst { head: cur.clone() });
                    cur = next;
                    continue;
                }
                return false;
            }
            if pieces.is_empty() && self.mode == Mode::Abduce && !self.sourced_at(&cur, &fields) {
                self.close_open(&tail_r);
                let t = self.resolve(&tail_r);
                let atom = Spatial::Seg { block: block.clone(), head: cv, tail: t };
                self.missing_spatial.push(atom.clone());
                self.missing_at.push(self.lhs.len());
                self.lhs.push(atom);
                self.used.push(true);
                self.rebuild();
                return !self.ctx.is_unsat();
            }
            return false;
        }
        let n = pieces.len();
        for (k, p) in pieces.iter().enumerate() {
            let last = k + 1 == n;
            match p {
                Piece::Seg { atom, head, tail } => {
                    if !last && !self.ctx.outside_cells(&tail_r, &fields, &[*atom], Some((head, tail))) {
                        return false;
                    }
                }
                Piece::Inst { head, .. } => {
                    if !self.ctx.proves_ne(head, &tail_r) {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn match_all(&mut self, atoms: Vec<Spatial>) -> bool {
        let mut pending = atoms;
        loop {
            if pending.is_empty() {
                return true;
            }
            let mut progress = false;
            for k in 0..pending.len() {
                let src = self.resolve_var(pending[k].source());
                if self.has_open(&src) {
                    continue;
                }
                let atom = pending.remove(k);
                let ok = match &atom {
                    Spatial::PointsTo { field, val, .. } => self.match_pts(&src, field, val),
                    Spatial::Seg { block, tail, .. } => self.match_seg(block, &src, tail),
                };
                if !ok {
                    return false;
                }
                progress = true;
                break;
            }
            if !progress {
                if self.mode == Mode::Entail {
                    return false;
                }
                // open sources: give them fresh values and demand the atoms
                let a = pending[0].source().clone();
                self.close_open(&Expr::Var(a));
            }
        }
    }

    fn settle_equalities(&mut self, pending: &mut Vec<Pure>) {
        loop {
            let mut changed = false;
            let mut k = 0;
            while k < pending.len() {
                let p = &pending[k];
                if p.op == Cmp::Eq {
                    let l = self.resolve(&p.lhs);
                    let r = self.resolve(&p.rhs);
                    let pick = match (&l, &r) {
                        (Expr::Var(v), e) if self.open_var(v) && !self.has_open(e) => Some((v.clone(), e.clone())),
                        (e, Expr::Var(v)) if self.open_var(v) && !self.has_open(e) => Some((v.clone(), e.clone())),
                        _ => None,
                    };
                    if let Some((v, e)) = pick {
                        self.assign.insert(v, e);
                        pending.remove(k);
                        changed = true;
                        continue;
                    }
                }
                k += 1;
            }
            if !changed {
                return;
            }
        }
    }

    fn run(&mut self, rhs: &SymHeap) -> bool {
        if self.ctx.is_unsat() {
            self.used.iter_mut().for_each(|u| *u = true);
            return true;
        }
        let mut pending: Vec<Pure> = Vec::new();
        for p in &rhs.pure {
            let prog = matches!(p.as_var_eq(), Some((Var::Prog(_), _)));
            if !prog {
                pending.push(p.clone());
                continue;
            }
            let (x, e) = p.as_var_eq().unwrap();
            let direct = self.mode == Mode::Entail
                || self.lhs.iter().any(|a| a.mentions(x))
                || self.lhs_pure.iter().any(|p| p.mentions(x));
            let bound = match self.prog_binding(x) {
                Some(b) => b,
                None if direct => Expr::Var(x.clone()),
                None => {
                    if self.mode == Mode::Entail {
                        return false;
                    }
                    let f = self.fresh.expr();
                    let b = Pure::eq(Expr::Var(x.clone()), f.clone());
                    self.lhs_pure.push(b.clone());
                    self.bindings.push(b.clone());
                    self.ctx.assume(&b);
                    f
                }
            };
            if !self.unify(e, &bound) {
                return false;
            }
        }
        self.settle_equalities(&mut pending);
        if !self.match_all(rhs.spatial.clone()) {
            return false;
        }
        self.settle_equalities(&mut pending);
        for p in pending {
            let r = self.resolve(&p.lhs);
            let s = self.resolve(&p.rhs);
            let q = Pure::new(p.op, r, s);
            if q.is_trivial() {
                continue;
            }
            if self.has_open(&q.lhs) || self.has_open(&q.rhs) {
                if self.mode == Mode::Entail {
                    return false;
                }
                self.close_open(&q.lhs);
                self.close_open(&q.rhs);
            }
            let q = Pure::new(q.op, self.resolve(&q.lhs), self.resolve(&q.rhs));
            if self.ctx.proves(&q) {
                continue;
            }
            if self.mode == Mode::Entail {
                return false;
            }
            self.add_missing_pure(q);
        }
        !self.ctx.is_unsat() || self.mode == Mode::Entail
    }

    fn frame(&self) -> Vec<Spatial> {
        self.lhs.iter().zip(&self.used).filter(|(_, u)| !**u).map(|(a, _)| a.clone()).collect()
    }
}

/// Bring program variables into `x = l` form; every other occurrence of a
/// program variable is replaced by its logical value. Unbound program
/// variables get fresh logicals, returned so callers can treat them as
/// existential.
pub fn normalize(h: &SymHeap, fresh: &mut Fresh) -> (SymHeap, Vec<Var>) {
    let mut binding: BTreeMap<Var, Expr> = BTreeMap::new();
    let mut created = Vec::new();
    let mut extra: Vec<Pure> = Vec::new();
    for p in &h.pure {
        if let Some((x @ Var::Prog(_), Expr::Var(l))) = p.as_var_eq() {
            if l.is_logical() {
                if let Some(prev) = binding.get(x) {
                    extra.push(Pure::eq(prev.clone(), Expr::Var(l.clone())));
                } else {
                    binding.insert(x.clone(), Expr::Var(l.clone()));
                }
            }
        }
    }
    for x in h.prog_vars() {
        binding.entry(x).or_insert_with(|| {
            let f = fresh.var();
            created.push(f.clone());
            Expr::Var(f)
        });
    }
    let mut pure: Vec<Pure> = Vec::new();
    for p in &h.pure {
        if let Some((x @ Var::Prog(_), Expr::Var(l))) = p.as_var_eq() {
            if l.is_logical() {
                let _ = x;
                continue;
            }
        }
        pure.push(p.subst(&|v| if v.is_prog() { binding.get(v).cloned() } else { None }));
    }
    pure.extend(extra);
    for (x, l) in &binding {
        pure.push(Pure::eq(Expr::Var(x.clone()), l.clone()));
    }
    let spatial = h.spatial.iter().map(|a| a.subst(&binding)).collect();
    (SymHeap::new(pure, spatial), created)
}

/// Existentials of `rhs` relative to `lhs`: plain logicals that `lhs` does not mention.
pub fn default_exists(lhs: &SymHeap, rhs: &SymHeap) -> BTreeSet<Var> {
    let l = lhs.vars();
    rhs.plain_logicals().into_iter().filter(|v| !l.contains(v)).collect()
}

pub fn entails(lhs: &SymHeap, rhs: &SymHeap) -> Entailment {
    let ex = default_exists(lhs, rhs);
    entails_with(lhs, rhs, &ex)
}

pub fn entails_with(lhs: &SymHeap, rhs: &SymHeap, exists: &BTreeSet<Var>) -> Entailment {
    let mut fresh = Fresh::above(&lhs.star(rhs));
    let (rhs, created) = normalize(rhs, &mut fresh);
    let mut ex = exists.clone();
    ex.extend(created);
    let mut p = Prover::new(Mode::Entail, lhs, ex, &mut fresh);
    let ok = p.run(&rhs);
    let frame = SymHeap::from_spatial(p.frame());
    Entailment { proved: ok, frame }
}

/// Proved with nothing left over.
pub fn entails_exact(lhs: &SymHeap, rhs: &SymHeap) -> bool {
    let e = entails(lhs, rhs);
    e.proved && e.frame.spatial.is_empty()
}

pub fn entails_exact_with(lhs: &SymHeap, rhs: &SymHeap, exists: &BTreeSet<Var>) -> bool {
    let e = entails_with(lhs, rhs, exists);
    e.proved && e.frame.spatial.is_empty()
}

/// Match `demand` against `state`, collecting what is missing.
pub fn abduce(state: &SymHeap, demand: &SymHeap, exists: &BTreeSet<Var>, fresh: &mut Fresh) -> Option<Abduction> {
    fresh.bump_past(&state.star(demand));
    let mut p = Prover::new(Mode::Abduce, state, exists.clone(), fresh);
    if !p.run(demand) {
        return None;
    }
    if p.ctx.is_unsat() {
        return None;
    }
    let consumed: Vec<Spatial> = p
        .lhs
        .iter()
        .enumerate()
        .filter(|(i, _)| p.used[*i] && !p.missing_at.contains(i))
        .map(|(_, a)| a.clone())
        .collect();
    let frame = p.frame();
    let mut state_atoms: Vec<Spatial> = consumed.clone();
    state_atoms.extend(frame.iter().cloned());
    Some(Abduction {
        missing: SymHeap::new(p.missing_pure.clone(), p.missing_spatial.clone()),
        state: SymHeap::new(p.lhs_pure.clone(), state_atoms),
        consumed,
        frame,
        assign: p.assign.clone(),
        bindings: p.bindings.clone(),
    })
}
